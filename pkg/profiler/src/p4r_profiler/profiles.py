"""Profile generation and the profiles jsonl format.

A generated profile is split into three sections by literal headers
(``SUMMARY:``, ``PREFERENCE PREDICTION:``, ``REASONING:``), each at the
start of a line, each appearing exactly once.  Responses that break
that grammar are kept whole in ``raw_text`` with empty sections and a
parse-warning flag rather than dropped; a profile is only worthless if
we throw it away.

The jsonl rows carry the three sections, the raw text, and the decode
settings that produced them:

    {"item_id", "summary", "preference_prediction", "reasoning",
     "raw_text", "decode": {"strategy", "top_k", "max_new_tokens",
     "model_name"}}
"""

from __future__ import annotations

import json
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .llm import DecodeSettings
from .metadata import ItemMetadata
from .prompts import DEFAULT_TEMPLATE, SECTION_MARKERS, PromptTemplate, build_prompt

_FIELD_BY_MARKER = {
    "SUMMARY:": "summary",
    "PREFERENCE PREDICTION:": "preference_prediction",
    "REASONING:": "reasoning",
}


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ItemProfile:
    item_id: str
    summary: str
    preference_prediction: str
    reasoning: str
    raw_text: str
    decode: dict = field(default_factory=dict)
    parse_warning: bool = False

    def __post_init__(self):
        if not self.raw_text:
            raise ProfileError(f"item {self.item_id!r}: raw_text must be non-empty")
        for name in ("summary", "preference_prediction", "reasoning"):
            text = getattr(self, name)
            if text and text not in self.raw_text:
                raise ProfileError(f"item {self.item_id!r}: section {name} is not "
                                   "a substring of raw_text")

    @property
    def sections(self) -> dict[str, str]:
        return {"summary": self.summary,
                "preference_prediction": self.preference_prediction,
                "reasoning": self.reasoning}


def parse_sections(text: str) -> dict[str, str] | None:
    """Split a response into its three sections by header position.

    Returns None unless every marker appears exactly once at the start
    of a line; section content runs to the next marker (or the end) and
    is stripped of surrounding whitespace.
    """
    hits = []
    for marker in SECTION_MARKERS:
        pattern = re.compile(rf"^[ \t]*{re.escape(marker)}", re.MULTILINE)
        found = list(pattern.finditer(text))
        if len(found) != 1:
            return None
        hits.append((found[0].start(), found[0].end(), marker))
    hits.sort()
    out = {}
    for pos, (start, end, marker) in enumerate(hits):
        stop = hits[pos + 1][0] if pos + 1 < len(hits) else len(text)
        out[_FIELD_BY_MARKER[marker]] = text[end:stop].strip()
    return out


def generate_profile(item_id: str, prompt: str, endpoint,
                     decode: DecodeSettings) -> ItemProfile:
    """One generation round trip: send the prompt, parse the sections,
    record the decode settings.  A response that defies the section
    grammar is kept raw with a warning, never discarded."""
    text = endpoint.complete(prompt, decode, item_id=item_id)
    if not text:
        raise ProfileError(f"item {item_id!r}: endpoint returned an empty generation")
    sections = parse_sections(text)
    if sections is None:
        warnings.warn(f"item {item_id!r}: response lacks the three section headers; "
                      "keeping raw text with empty sections")
        return ItemProfile(item_id=item_id, summary="", preference_prediction="",
                           reasoning="", raw_text=text, decode=decode.as_dict(),
                           parse_warning=True)
    return ItemProfile(item_id=item_id, raw_text=text, decode=decode.as_dict(),
                       **sections)


def generate_profiles(metadata: list[ItemMetadata], endpoint,
                      decode: DecodeSettings,
                      template: PromptTemplate = DEFAULT_TEMPLATE,
                      max_workers: int = 1) -> list[ItemProfile]:
    """Profile every metadata record, preserving input order in the
    output regardless of completion order."""

    def one(meta: ItemMetadata) -> ItemProfile:
        return generate_profile(meta.item_id, build_prompt(meta, template),
                                endpoint, decode)

    if max_workers <= 1:
        return [one(meta) for meta in metadata]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, metadata))


def write_profiles_jsonl(path, profiles: list[ItemProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for prof in profiles:
            row = {"item_id": prof.item_id, "summary": prof.summary,
                   "preference_prediction": prof.preference_prediction,
                   "reasoning": prof.reasoning, "raw_text": prof.raw_text,
                   "decode": prof.decode}
            fh.write(json.dumps(row) + "\n")


def read_profiles_jsonl(path) -> list[ItemProfile]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                prof = ItemProfile(
                    item_id=row["item_id"], summary=row["summary"],
                    preference_prediction=row["preference_prediction"],
                    reasoning=row["reasoning"], raw_text=row["raw_text"],
                    decode=dict(row.get("decode", {})),
                    parse_warning=not (row["summary"] or row["preference_prediction"]
                                       or row["reasoning"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise ProfileError(f"line {line_no}: bad profile row ({err})") from None
            out.append(prof)
    return out
