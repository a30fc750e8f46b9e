"""Interaction-log parsing, dataset indexing, filtering, and splits."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(ValueError):
    """Well-formed input that violates a dataset invariant."""

    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


VALID_RATINGS = frozenset({1, 2, 3, 4, 5})


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    rating: int
    timestamp: int | None = None


@dataclass
class Dataset:
    """Dense-indexed interactions with train/val/test splits.

    The index maps are bijections from raw string ids onto ``[0, n_users)``
    and ``[0, n_items)``.  Splits hold ``(user_idx, item_idx, rating)``
    triples; before :func:`split_dataset` runs, everything sits in train.
    """

    n_users: int
    n_items: int
    user_index: dict[str, int]
    item_index: dict[str, int]
    train: list[tuple[int, int, int]]
    val: list[tuple[int, int, int]] = field(default_factory=list)
    test: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        if sorted(self.user_index.values()) != list(range(self.n_users)):
            raise ValidationError("user_index must map raw ids onto 0..n_users-1 densely")
        if sorted(self.item_index.values()) != list(range(self.n_items)):
            raise ValidationError("item_index must map raw ids onto 0..n_items-1 densely")
        seen: dict[tuple[int, int], str] = {}
        for name in ("train", "val", "test"):
            for u, i, _ in getattr(self, name):
                if not (0 <= u < self.n_users and 0 <= i < self.n_items):
                    raise ValidationError(f"{name} split holds out-of-range pair ({u}, {i})")
                if (u, i) in seen:
                    where = seen[(u, i)]
                    raise ValidationError(
                        f"duplicate pair ({u}, {i}) within {name}" if where == name
                        else f"pair ({u}, {i}) appears in both {where} and {name}")
                seen[(u, i)] = name
        if len({u for u, _, _ in self.train}) != self.n_users:
            raise ValidationError("every user must appear in train at least once")

    @property
    def n_interactions(self):
        return len(self.train) + len(self.val) + len(self.test)

    @property
    def user_ids(self):
        ids = [""] * self.n_users
        for raw, idx in self.user_index.items():
            ids[idx] = raw
        return ids

    @property
    def item_ids(self):
        ids = [""] * self.n_items
        for raw, idx in self.item_index.items():
            ids[idx] = raw
        return ids


@dataclass
class ItemMetadata:
    """Raw per-item attribute text, split into objective facts (intrinsic)
    and subjective feedback (extrinsic)."""

    item_id: str
    intrinsic: dict[str, str]
    extrinsic: dict[str, str]

    def __post_init__(self):
        if not self.item_id:
            raise ValidationError("item_id must be non-empty")
        overlap = set(self.intrinsic) & set(self.extrinsic)
        if overlap:
            raise ValidationError(
                f"intrinsic/extrinsic keys overlap for item {self.item_id!r}: {sorted(overlap)}"
            )


def _check_rating(value, line_no):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"rating must be an integer, got {value!r}", line_no)
    if value not in VALID_RATINGS:
        raise ValidationError(f"rating {value} outside 1..5", line_no)
    return value


def parse_interactions(path, format: str = "csv") -> list[InteractionRecord]:
    """Read interaction records from a csv or jsonl file.

    csv layout: header ``user_id,item_id,rating[,timestamp]`` then one
    record per line.  jsonl: one object per line with the same keys.
    Blank lines are skipped.  Raises :class:`ParseError` on malformed
    lines and :class:`ValidationError` on out-of-range ratings, both
    carrying the offending line number.
    """
    path = Path(path)
    if format == "csv":
        return _parse_csv(path)
    if format == "jsonl":
        return _parse_jsonl(path)
    raise ValueError(f"unknown interactions format {format!r}")


def _parse_csv(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if line_no == 1:
                if row[0].strip() != "user_id":
                    raise ParseError(f"expected header starting with 'user_id', got {row!r}", 1)
                continue
            if len(row) not in (3, 4):
                raise ParseError(f"expected 3 or 4 fields, got {len(row)}", line_no)
            user_id, item_id = row[0].strip(), row[1].strip()
            if not user_id or not item_id:
                raise ParseError("empty user_id or item_id", line_no)
            try:
                rating = int(row[2])
            except ValueError:
                raise ParseError(f"rating {row[2]!r} is not an integer", line_no) from None
            _check_rating(rating, line_no)
            timestamp = None
            if len(row) == 4 and row[3].strip():
                try:
                    timestamp = int(row[3])
                except ValueError:
                    raise ParseError(f"timestamp {row[3]!r} is not an integer", line_no) from None
            records.append(InteractionRecord(user_id, item_id, rating, timestamp))
    return records


def _parse_jsonl(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid json: {exc.msg}", line_no) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a json object", line_no)
            try:
                user_id, item_id, rating = obj["user_id"], obj["item_id"], obj["rating"]
            except KeyError as exc:
                raise ParseError(f"missing key {exc.args[0]!r}", line_no) from None
            if not isinstance(user_id, str) or not isinstance(item_id, str) or not user_id or not item_id:
                raise ParseError("user_id and item_id must be non-empty strings", line_no)
            _check_rating(rating, line_no)
            timestamp = obj.get("timestamp")
            if timestamp is not None and (isinstance(timestamp, bool) or not isinstance(timestamp, int)):
                raise ParseError(f"timestamp must be an integer, got {timestamp!r}", line_no)
            records.append(InteractionRecord(user_id, item_id, rating, timestamp))
    return records


def build_dataset(records, min_user_deg: int = 1, min_item_deg: int = 1,
                  seed: int = 0, max_users: int | None = None) -> Dataset:
    """Deduplicate, prune, and densely index interaction records.

    Duplicate (user, item) pairs collapse to the last occurrence.  Users
    below ``min_user_deg`` and items below ``min_item_deg`` are removed
    iteratively until a fixed point.  When ``max_users`` is given, that
    many users are sampled (seeded, uniform) before pruning.  Dense
    indices follow first-appearance order of the retained records; all
    interactions land in the train list.
    """
    if not records:
        raise ValidationError("no interaction records given")

    deduped: dict[tuple[str, str], InteractionRecord] = {}
    for rec in records:
        deduped[(rec.user_id, rec.item_id)] = rec
    kept = list(deduped.values())

    if max_users is not None:
        all_users = list(dict.fromkeys(r.user_id for r in kept))
        if max_users < len(all_users):
            rng = np.random.default_rng(seed)
            chosen = set(rng.choice(np.array(all_users, dtype=object), size=max_users, replace=False))
            kept = [r for r in kept if r.user_id in chosen]

    while True:
        user_deg: dict[str, int] = {}
        item_deg: dict[str, int] = {}
        for rec in kept:
            user_deg[rec.user_id] = user_deg.get(rec.user_id, 0) + 1
            item_deg[rec.item_id] = item_deg.get(rec.item_id, 0) + 1
        bad_users = {u for u, d in user_deg.items() if d < min_user_deg}
        bad_items = {i for i, d in item_deg.items() if d < min_item_deg}
        if not bad_users and not bad_items:
            break
        kept = [r for r in kept if r.user_id not in bad_users and r.item_id not in bad_items]
        if not kept:
            raise ValidationError("empty after filtering")

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    train = []
    for rec in kept:
        u = user_index.setdefault(rec.user_id, len(user_index))
        i = item_index.setdefault(rec.item_id, len(item_index))
        train.append((u, i, rec.rating))
    return Dataset(len(user_index), len(item_index), user_index, item_index, train)


def split_dataset(dataset: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> Dataset:
    """Partition each user's interactions into train/val/test.

    Per user, interactions are shuffled with a seeded generator and cut
    by ``ratios`` with floor rounding; the remainder goes to train, so a
    positive train ratio guarantees every user keeps at least one train
    interaction.  A zero train ratio cannot honor that guarantee and is
    rejected.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValidationError(f"ratios must be three non-negative fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must sum to 1, got {sum(ratios)}")

    pool = dataset.train + dataset.val + dataset.test
    if ratios[0] == 0.0 and pool:
        raise ValidationError("train ratio 0 cannot keep every user in train")

    per_user: dict[int, list[tuple[int, int, int]]] = {}
    for triple in pool:
        per_user.setdefault(triple[0], []).append(triple)

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for u in sorted(per_user):
        triples = per_user[u]
        order = rng.permutation(len(triples))
        shuffled = [triples[k] for k in order]
        c = len(shuffled)
        n_val = int(c * ratios[1])
        n_test = int(c * ratios[2])
        n_train = c - n_val - n_test
        train.extend(shuffled[:n_train])
        val.extend(shuffled[n_train:n_train + n_val])
        test.extend(shuffled[n_train + n_val:])
    return Dataset(dataset.n_users, dataset.n_items, dict(dataset.user_index),
                   dict(dataset.item_index), train, val, test)


def sparsity(n_users: int, n_items: int, n_interactions: int) -> float:
    """Fraction of the user-item matrix left empty: 1 - k/(n*m)."""
    if n_users <= 0 or n_items <= 0:
        raise ValueError("n_users and n_items must be positive")
    cells = n_users * n_items
    if n_interactions > cells or n_interactions < 0:
        raise ValueError(f"n_interactions {n_interactions} outside [0, {cells}]")
    return (cells - n_interactions) / cells


def sparsity_percent(n_users: int, n_items: int, n_interactions: int,
                     decimals: int = 6) -> str:
    """Sparsity as a percent string, exact integer arithmetic throughout.

    Digits past ``decimals`` places are truncated, never rounded, so the
    printed figure is a hard lower bound of the true value.
    """
    sparsity(n_users, n_items, n_interactions)
    cells = n_users * n_items
    scaled = 10 ** (decimals + 2) * (cells - n_interactions) // cells
    return f"{scaled // 10 ** decimals}.{scaled % 10 ** decimals:0{decimals}d}"


def load_item_metadata(path) -> list[ItemMetadata]:
    """Read item metadata jsonl: one object per line with ``item_id``,
    ``intrinsic`` and ``extrinsic`` string maps."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid json: {exc.msg}", line_no) from None
            try:
                meta = ItemMetadata(
                    item_id=obj["item_id"],
                    intrinsic={str(k): str(v) for k, v in obj.get("intrinsic", {}).items()},
                    extrinsic={str(k): str(v) for k, v in obj.get("extrinsic", {}).items()},
                )
            except KeyError as exc:
                raise ParseError(f"missing key {exc.args[0]!r}", line_no) from None
            out.append(meta)
    return out


# --- dataset directory layout: manifest.json + one csv per split ---

_SPLIT_FILES = {"train": "train.csv", "val": "val.csv", "test": "test.csv"}


def save_dataset(dataset: Dataset, out_dir, seed: int, ratios=(0.8, 0.1, 0.1)) -> Path:
    """Write the manifest and split files; returns the manifest path.

    The manifest records counts, sparsity, seed, ratios, and both index
    maps, serialized with sorted keys so identical inputs produce
    byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n_users": dataset.n_users,
        "n_items": dataset.n_items,
        "n_interactions": dataset.n_interactions,
        "sparsity": sparsity(dataset.n_users, dataset.n_items, dataset.n_interactions),
        "seed": seed,
        "ratios": list(ratios),
        "split_sizes": {name: len(getattr(dataset, name)) for name in _SPLIT_FILES},
        "user_index": dataset.user_index,
        "item_index": dataset.item_index,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    for name, fname in _SPLIT_FILES.items():
        with open(out_dir / fname, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["user_idx", "item_idx", "rating"])
            writer.writerows(getattr(dataset, name))
    return manifest_path


def load_dataset(data_dir) -> Dataset:
    """Reload a dataset written by :func:`save_dataset`."""
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / "manifest.json").read_text(encoding="utf-8"))
    splits = {}
    for name, fname in _SPLIT_FILES.items():
        triples = []
        with open(data_dir / fname, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for row in reader:
                if row:
                    triples.append((int(row[0]), int(row[1]), int(row[2])))
        splits[name] = triples
    return Dataset(manifest["n_users"], manifest["n_items"],
                   {k: int(v) for k, v in manifest["user_index"].items()},
                   {k: int(v) for k, v in manifest["item_index"].items()},
                   splits["train"], splits["val"], splits["test"])


def manifest_hash(data_dir) -> str:
    """sha256 of the manifest file bytes; checkpoints pin this."""
    payload = (Path(data_dir) / "manifest.json").read_bytes()
    return hashlib.sha256(payload).hexdigest()
