"""Prompt construction for item-profile generation.

A prompt has three parts, always in this order: the item's objective
attribute lines, the community-feedback lines behind a caution note
(subjective signal gets discounted, never leads), and an instruction
asking for exactly three output sections.  The section headers are
fixed literal markers so the downstream parser can split the response
without guessing:

    SUMMARY:
    PREFERENCE PREDICTION:
    REASONING:
"""

from __future__ import annotations

from dataclasses import dataclass

from .metadata import ItemMetadata

SECTION_MARKERS = ("SUMMARY:", "PREFERENCE PREDICTION:", "REASONING:")


class PromptError(ValueError):
    pass


_DEFAULT_INSTRUCTION = (
    "Using everything above, write exactly three sections, each starting on "
    "its own line with the exact header shown:\n"
    "SUMMARY: a short factual summary of the item.\n"
    "PREFERENCE PREDICTION: the kinds of users likely to enjoy this item and why.\n"
    "REASONING: recommendation-oriented reasoning that connects the item facts "
    "to that prediction."
)


@dataclass(frozen=True)
class PromptTemplate:
    """Fixed prose around the rendered attribute lines.  The instruction
    must name every section marker or the response becomes unparseable."""

    intrinsic_header: str = "Item facts:"
    extrinsic_header: str = ("Community feedback (subjective; weigh it less than the "
                             "facts above and discount reviewer bias):")
    instruction: str = _DEFAULT_INSTRUCTION

    def __post_init__(self):
        missing = [m for m in SECTION_MARKERS if m not in self.instruction]
        if missing:
            raise PromptError(f"instruction omits required section markers: {missing}")


DEFAULT_TEMPLATE = PromptTemplate()


@dataclass(frozen=True)
class PromptSpec:
    """Rendered prompt blocks; ``render`` joins them in fixed order
    (facts first, feedback second, instruction last)."""

    intrinsic_block: str
    extrinsic_block: str
    instruction_block: str

    def __post_init__(self):
        if not self.intrinsic_block:
            raise PromptError("intrinsic block must be non-empty")
        missing = [m for m in SECTION_MARKERS if m not in self.instruction_block]
        if missing:
            raise PromptError(f"instruction omits required section markers: {missing}")

    def render(self) -> str:
        blocks = [self.intrinsic_block]
        if self.extrinsic_block:
            blocks.append(self.extrinsic_block)
        blocks.append(self.instruction_block)
        return "\n\n".join(blocks)


def _attribute_lines(attrs: dict[str, str]) -> str:
    return "\n".join(f"- {name}: {text}" for name, text in attrs.items())


def build_prompt_spec(metadata: ItemMetadata,
                      template: PromptTemplate = DEFAULT_TEMPLATE) -> PromptSpec:
    """Render metadata into prompt blocks.  Items without a single
    objective attribute cannot be profiled."""
    if not metadata.intrinsic:
        raise PromptError(f"item {metadata.item_id!r} has no intrinsic attributes")
    intrinsic = f"{template.intrinsic_header}\n{_attribute_lines(metadata.intrinsic)}"
    extrinsic = ""
    if metadata.extrinsic:
        extrinsic = f"{template.extrinsic_header}\n{_attribute_lines(metadata.extrinsic)}"
    return PromptSpec(intrinsic_block=intrinsic, extrinsic_block=extrinsic,
                      instruction_block=template.instruction)


def build_prompt(metadata: ItemMetadata,
                 template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    return build_prompt_spec(metadata, template).render()
