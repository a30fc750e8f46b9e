"""Profile text -> fixed-width vectors, exported in the recommender's
embedding file formats.

Any object with ``dim``, ``max_tokens`` and ``encode(texts) -> (B, dim)
float32`` works as an encoder; a transformer encoder plugs in behind
the same surface.  The built-in ``HashingEncoder`` is a deterministic,
dependency-free stand-in: signed feature hashing of unigram counts,
L2-normalized.  It is not a semantic model, but it is stable across
processes and platforms, which is what the format contract and the
tests need.

Output formats (either or both):

* jsonl: ``{"item_id": str, "vector": [f, ...]}`` per line;
* binary: magic ``P4RE``, little-endian u32 version=1, u32 dim, u64
  record count, then per record a u32 item index and dim float32
  values.  Bit-exact on round trip.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import warnings

import numpy as np

BINARY_MAGIC = b"P4RE"
BINARY_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_HASHING_ID = re.compile(r"hashing-(\d+)$")


class EncoderError(ValueError):
    pass


class HashingEncoder:
    """Signed unigram feature hashing into ``dim`` buckets.

    Bucket and sign come from a keyless blake2b of the token bytes, so
    identical text encodes to bit-identical vectors anywhere.  Texts
    longer than ``max_tokens`` tokens are truncated with a warning.
    """

    def __init__(self, dim: int = 768, max_tokens: int = 512):
        if dim < 1:
            raise EncoderError("dim must be >= 1")
        self.dim = dim
        self.max_tokens = max_tokens

    def _tokens(self, text: str) -> list[str]:
        tokens = _TOKEN_RE.findall(text.lower())
        if len(tokens) > self.max_tokens:
            warnings.warn(f"text of {len(tokens)} tokens truncated to {self.max_tokens}")
            tokens = tokens[: self.max_tokens]
        return tokens

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            for token in self._tokens(text):
                digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "little")
                sign = np.float32(1.0) if value & 1 else np.float32(-1.0)
                out[row, (value >> 1) % self.dim] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


def get_encoder(encoder_id: str):
    """Resolve an encoder id; only ``hashing-<dim>`` ships built in.
    Model-backed encoders are passed as objects, not resolved by id."""
    match = _HASHING_ID.match(encoder_id)
    if match:
        return HashingEncoder(dim=int(match.group(1)))
    raise EncoderError(f"unknown encoder {encoder_id!r}; built-in ids match "
                       "'hashing-<dim>', or pass an encoder object directly")


def write_embeddings_jsonl(path, pairs) -> None:
    """``pairs`` iterates (item_id, vector)."""
    with open(path, "w", encoding="utf-8") as fh:
        for item_id, vec in pairs:
            row = [float(v) for v in np.asarray(vec, dtype=np.float32)]
            fh.write(json.dumps({"item_id": item_id, "vector": row}) + "\n")


def write_embeddings_binary(path, pairs, dim: int) -> None:
    """``pairs`` iterates (item_index, vector); payload is little-endian
    float32, reloadable bit-exactly."""
    pairs = list(pairs)
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", BINARY_VERSION, dim))
        fh.write(struct.pack("<Q", len(pairs)))
        for idx, vec in pairs:
            row = np.ascontiguousarray(np.asarray(vec, dtype="<f4"))
            if row.shape != (dim,):
                raise EncoderError(f"vector for index {idx} has shape {row.shape}, "
                                   f"expected ({dim},)")
            fh.write(struct.pack("<I", int(idx)))
            fh.write(row.tobytes())


def encode_profiles(profiles, encoder, batch_size: int = 16,
                    out_jsonl=None, out_binary=None,
                    item_index: dict[str, int] | None = None) -> dict[str, np.ndarray]:
    """Encode each profile's raw text and optionally write either format.

    ``encoder`` is an id string or an encoder object.  The binary format
    stores integer item indices, so writing it requires ``item_index``
    (the dataset's id -> index map).  Returns id -> vector.
    """
    profiles = list(profiles)
    if not profiles:
        raise EncoderError("no profiles to encode")
    if isinstance(encoder, str):
        encoder = get_encoder(encoder)
    if batch_size < 1:
        raise EncoderError("batch_size must be >= 1")

    vectors = {}
    for start in range(0, len(profiles), batch_size):
        batch = profiles[start:start + batch_size]
        encoded = encoder.encode([prof.raw_text for prof in batch])
        for prof, vec in zip(batch, encoded):
            if prof.item_id in vectors:
                raise EncoderError(f"duplicate profile for item {prof.item_id!r}")
            vectors[prof.item_id] = vec

    if out_jsonl is not None:
        write_embeddings_jsonl(out_jsonl, ((p.item_id, vectors[p.item_id])
                                           for p in profiles))
    if out_binary is not None:
        if item_index is None:
            raise EncoderError("binary output stores item indices; pass item_index")
        missing = [p.item_id for p in profiles if p.item_id not in item_index]
        if missing:
            raise EncoderError(f"item_index misses profiled items: {missing[:5]}")
        write_embeddings_binary(out_binary,
                                ((item_index[p.item_id], vectors[p.item_id])
                                 for p in profiles),
                                encoder.dim)
    return vectors
