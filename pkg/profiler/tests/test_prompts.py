"""Prompt rendering: block order, marker presence, determinism."""

import pytest

from p4r_profiler.metadata import ItemMetadata
from p4r_profiler.prompts import (
    DEFAULT_TEMPLATE,
    SECTION_MARKERS,
    PromptError,
    PromptSpec,
    PromptTemplate,
    build_prompt,
    build_prompt_spec,
)


def _meta(item_id="i1", intrinsic=None, extrinsic=None):
    return ItemMetadata(item_id=item_id,
                        intrinsic=intrinsic if intrinsic is not None else {"name": "Blue Bottle"},
                        extrinsic=extrinsic or {})


class TestBuildPrompt:
    def test_contains_attribute_lines_and_all_markers(self):
        prompt = build_prompt(_meta(intrinsic={"name": "Blue Bottle", "category": "cafe"}))
        assert "- name: Blue Bottle" in prompt
        assert "- category: cafe" in prompt
        for marker in SECTION_MARKERS:
            assert marker in prompt

    def test_deterministic(self):
        meta = _meta(intrinsic={"name": "x", "brand": "y"}, extrinsic={"rating": "4.5"})
        assert build_prompt(meta) == build_prompt(meta)

    def test_extrinsic_rendered_after_all_intrinsic(self):
        meta = _meta(intrinsic={"name": "x", "category": "tools"},
                     extrinsic={"review": "loved it", "avg rating": "4.0"})
        prompt = build_prompt(meta)
        last_intrinsic = max(prompt.index("- name: x"), prompt.index("- category: tools"))
        first_extrinsic = min(prompt.index("- review: loved it"),
                              prompt.index("- avg rating: 4.0"))
        assert last_intrinsic < first_extrinsic

    def test_caution_note_precedes_extrinsic_lines(self):
        prompt = build_prompt(_meta(extrinsic={"review": "meh"}))
        assert prompt.index(DEFAULT_TEMPLATE.extrinsic_header) < prompt.index("- review: meh")

    def test_no_extrinsic_block_when_no_extrinsic_attributes(self):
        prompt = build_prompt(_meta())
        assert DEFAULT_TEMPLATE.extrinsic_header not in prompt

    def test_instruction_comes_last(self):
        prompt = build_prompt(_meta(extrinsic={"rating": "3.0"}))
        assert prompt.rstrip().endswith(DEFAULT_TEMPLATE.instruction.rstrip())

    def test_attribute_order_preserved(self):
        meta = _meta(intrinsic={"b": "2", "a": "1", "c": "3"})
        prompt = build_prompt(meta)
        assert prompt.index("- b: 2") < prompt.index("- a: 1") < prompt.index("- c: 3")

    def test_no_intrinsic_attributes_rejected(self):
        with pytest.raises(PromptError, match="no intrinsic"):
            build_prompt(_meta(intrinsic={}, extrinsic={"rating": "5"}))

    def test_distinct_metadata_distinct_prompts(self):
        prompts = {
            build_prompt(_meta(intrinsic={"name": "a"})),
            build_prompt(_meta(intrinsic={"name": "b"})),
            build_prompt(_meta(intrinsic={"name": "a", "city": "sf"})),
            build_prompt(_meta(intrinsic={"name": "a"}, extrinsic={"rating": "1"})),
        }
        assert len(prompts) == 4


class TestPromptSpec:
    def test_render_joins_blocks_with_blank_lines(self):
        spec = build_prompt_spec(_meta(extrinsic={"rating": "4"}))
        assert spec.render() == "\n\n".join(
            [spec.intrinsic_block, spec.extrinsic_block, spec.instruction_block])

    def test_render_skips_empty_extrinsic_block(self):
        spec = build_prompt_spec(_meta())
        assert spec.extrinsic_block == ""
        assert spec.render() == f"{spec.intrinsic_block}\n\n{spec.instruction_block}"

    def test_empty_intrinsic_block_rejected(self):
        with pytest.raises(PromptError):
            PromptSpec(intrinsic_block="", extrinsic_block="",
                       instruction_block=DEFAULT_TEMPLATE.instruction)

    def test_instruction_must_name_every_marker(self):
        partial = "Write SUMMARY: and REASONING: sections."
        with pytest.raises(PromptError, match="PREFERENCE PREDICTION:"):
            PromptSpec(intrinsic_block="facts", extrinsic_block="",
                       instruction_block=partial)


class TestPromptTemplate:
    def test_template_instruction_validated(self):
        with pytest.raises(PromptError, match="omits"):
            PromptTemplate(instruction="just write something nice")

    def test_custom_template_flows_through(self):
        template = PromptTemplate(
            intrinsic_header="FACTS>",
            extrinsic_header="HEARSAY>",
            instruction="Answer with SUMMARY: then PREFERENCE PREDICTION: then REASONING:",
        )
        prompt = build_prompt(_meta(extrinsic={"buzz": "high"}), template)
        assert "FACTS>" in prompt
        assert "HEARSAY>" in prompt
        assert prompt.index("FACTS>") < prompt.index("HEARSAY>")
