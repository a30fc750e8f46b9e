"""Per-item raw text-encoder vectors and their trainable projection.

Raw vectors arrive from the profile-encoding toolchain in one of two
formats (auto-detected on load):

* jsonl: ``{"item_id": str, "vector": [f, ...]}`` per line, dimension
  inferred from the first record and enforced on the rest;
* binary: magic ``P4RE``, little-endian u32 version=1, u32 dim, u64
  record count, then per record a u32 item index and dim float32 values.

A projected vector enters model space through a fully-connected layer
with a rectifier: ``max(0, W @ x + b)``.  Items without a stored vector
map to the zero vector, which makes the semantic term vanish for them.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BINARY_MAGIC = b"P4RE"
BINARY_VERSION = 1


class EmbeddingLoadError(ValueError):
    pass


@dataclass
class SemanticEmbeddingStore:
    """Row-per-item raw vectors plus a coverage mask.

    ``vectors`` is (n_items, dim_raw) float32; rows with ``coverage``
    False are all-zero placeholders.
    """

    dim_raw: int
    vectors: np.ndarray
    coverage: np.ndarray

    @property
    def n_items(self):
        return int(self.vectors.shape[0])

    @property
    def n_covered(self):
        return int(self.coverage.sum())


@dataclass
class ProjectionHead:
    """Trainable map from raw space (dim_raw) to model space (dim):
    x -> max(0, W @ x + b)."""

    W: np.ndarray
    b: np.ndarray

    @property
    def dim(self):
        return int(self.W.shape[0])

    @property
    def dim_raw(self):
        return int(self.W.shape[1])

    def copy(self):
        return ProjectionHead(self.W.copy(), self.b.copy())


def init_projection(dim: int, dim_raw: int, seed: int, dtype=np.float32) -> ProjectionHead:
    """Uniform init of W over +/- sqrt(6/(dim+dim_raw)); zero bias."""
    rng = np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (dim + dim_raw))
    W = rng.uniform(-bound, bound, size=(dim, dim_raw)).astype(dtype)
    b = np.zeros(dim, dtype=dtype)
    return ProjectionHead(W, b)


def project(head: ProjectionHead, x) -> np.ndarray:
    """Rectified affine map of a single raw vector."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != head.dim_raw:
        raise ValueError(f"expected a vector of length {head.dim_raw}, got shape {x.shape}")
    return np.maximum(head.W @ x + head.b, 0.0)


def project_all(head: ProjectionHead, store: SemanticEmbeddingStore, dtype=None) -> np.ndarray:
    """Project every covered row; uncovered rows stay exactly zero.

    Uncovered items bypass the affine map entirely (a zero raw vector
    would still pick up ``max(0, b)``), keeping their semantic term out
    of propagation.
    """
    if store.dim_raw != head.dim_raw:
        raise ValueError(f"store dim {store.dim_raw} != head input dim {head.dim_raw}")
    dtype = dtype or head.W.dtype
    V = store.vectors.astype(dtype, copy=False)
    out = np.maximum(V @ head.W.T.astype(dtype, copy=False) + head.b.astype(dtype, copy=False), 0.0)
    out[~store.coverage] = 0.0
    return out


def semantic_vector(store: SemanticEmbeddingStore, head: ProjectionHead, item_idx: int) -> np.ndarray:
    """Model-space semantic vector for one item; zeros when uncovered."""
    if store.coverage[item_idx]:
        return project(head, store.vectors[item_idx])
    return np.zeros(head.dim, dtype=head.W.dtype)


def load_embeddings(path, expected_items: int, item_index=None) -> SemanticEmbeddingStore:
    """Load raw item vectors, auto-detecting jsonl vs binary.

    ``expected_items`` sizes the store; jsonl files carry raw item ids
    and therefore need ``item_index`` (the dataset's id -> index map).
    Rejects dimension mismatches, non-finite values, unknown ids, and
    duplicate records, naming the offender.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return _load_binary(path, expected_items)
    return _load_jsonl(path, expected_items, item_index)


def _new_store(expected_items, dim):
    return SemanticEmbeddingStore(
        dim_raw=dim,
        vectors=np.zeros((expected_items, dim), dtype=np.float32),
        coverage=np.zeros(expected_items, dtype=bool),
    )


def _load_jsonl(path, expected_items, item_index):
    if item_index is None:
        raise EmbeddingLoadError("jsonl embeddings need an item_index map to resolve item ids")
    store = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                item_id, vec = obj["item_id"], obj["vector"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise EmbeddingLoadError(f"line {line_no}: malformed embedding record") from None
            if item_id not in item_index:
                raise EmbeddingLoadError(f"line {line_no}: unknown item id {item_id!r}")
            row = np.asarray(vec, dtype=np.float32)
            if row.ndim != 1:
                raise EmbeddingLoadError(f"line {line_no}: vector must be a flat list")
            if store is None:
                store = _new_store(expected_items, row.shape[0])
            if row.shape[0] != store.dim_raw:
                raise EmbeddingLoadError(
                    f"line {line_no}: dimension {row.shape[0]} != {store.dim_raw} from first record")
            if not np.all(np.isfinite(row)):
                raise EmbeddingLoadError(f"line {line_no}: non-finite value for item {item_id!r}")
            idx = item_index[item_id]
            if idx >= expected_items:
                raise EmbeddingLoadError(f"line {line_no}: item index {idx} out of range")
            if store.coverage[idx]:
                raise EmbeddingLoadError(f"line {line_no}: duplicate record for item {item_id!r}")
            store.vectors[idx] = row
            store.coverage[idx] = True
    if store is None:
        raise EmbeddingLoadError(f"{path}: no embedding records found")
    return store


def _load_binary(path, expected_items):
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) < 20 or header[:4] != BINARY_MAGIC:
            raise EmbeddingLoadError(f"{path}: not a valid binary embedding file")
        version, dim = struct.unpack("<II", header[4:12])
        (count,) = struct.unpack("<Q", header[12:20])
        if version != BINARY_VERSION:
            raise EmbeddingLoadError(f"{path}: unsupported version {version}")
        store = _new_store(expected_items, dim)
        rec_size = 4 + 4 * dim
        for r in range(count):
            blob = fh.read(rec_size)
            if len(blob) != rec_size:
                raise EmbeddingLoadError(f"{path}: truncated at record {r}")
            (idx,) = struct.unpack("<I", blob[:4])
            row = np.frombuffer(blob[4:], dtype="<f4")
            if idx >= expected_items:
                raise EmbeddingLoadError(f"record {r}: item index {idx} out of range")
            if store.coverage[idx]:
                raise EmbeddingLoadError(f"record {r}: duplicate item index {idx}")
            if not np.all(np.isfinite(row)):
                raise EmbeddingLoadError(f"record {r}: non-finite value at item index {idx}")
            store.vectors[idx] = row
            store.coverage[idx] = True
    return store


def write_embeddings_jsonl(path, records) -> None:
    """Write ``(item_id, vector)`` pairs as the canonical jsonl format."""
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, vec in records:
            row = [float(v) for v in np.asarray(vec, dtype=np.float32)]
            fh.write(json.dumps({"item_id": item_id, "vector": row}) + "\n")


def write_embeddings_binary(path, records, dim: int) -> None:
    """Write ``(item_idx, vector)`` pairs in the bit-exact binary format."""
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", BINARY_VERSION, dim))
        fh.write(struct.pack("<Q", len(records)))
        for idx, vec in records:
            row = np.ascontiguousarray(np.asarray(vec, dtype="<f4"))
            if row.shape != (dim,):
                raise ValueError(f"vector for index {idx} has shape {row.shape}, expected ({dim},)")
            fh.write(struct.pack("<I", idx))
            fh.write(row.tobytes())
