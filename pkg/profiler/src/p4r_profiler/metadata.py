"""Item metadata input: one json object per line with ``item_id`` plus
``intrinsic`` and ``extrinsic`` string maps.

Intrinsic attributes are objective facts about the item (name,
categories, brand, ...); extrinsic ones are community feedback (average
rating, review excerpts, ...).  The two key sets must not overlap.  The
format matches what the recommender's own metadata loader reads, so one
file serves both packages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class MetadataError(ValueError):
    pass


@dataclass(frozen=True)
class ItemMetadata:
    item_id: str
    intrinsic: dict[str, str] = field(default_factory=dict)
    extrinsic: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.item_id:
            raise MetadataError("item_id must be non-empty")
        overlap = set(self.intrinsic) & set(self.extrinsic)
        if overlap:
            raise MetadataError(
                f"intrinsic/extrinsic keys overlap for item {self.item_id!r}: {sorted(overlap)}")


def load_item_metadata(path) -> list[ItemMetadata]:
    """Read metadata jsonl in file order; attribute order inside each
    map is preserved as written."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetadataError(f"line {line_no}: invalid json ({exc.msg})") from None
            try:
                meta = ItemMetadata(
                    item_id=obj["item_id"],
                    intrinsic={str(k): str(v) for k, v in obj.get("intrinsic", {}).items()},
                    extrinsic={str(k): str(v) for k, v in obj.get("extrinsic", {}).items()},
                )
            except KeyError as exc:
                raise MetadataError(f"line {line_no}: missing key {exc.args[0]!r}") from None
            out.append(meta)
    return out
