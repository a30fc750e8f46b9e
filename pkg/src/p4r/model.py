"""Layered message-passing model over the bipartite graph.

Each layer aggregates neighbor embeddings with symmetric normalization;
the item-side update additionally folds in the item's semantic vector,
scaled by ``alpha * beta`` and the item's summed edge norms:

    item_next[i] = alpha * sum_{u in N(i)} norm(u,i) * user[u]
                 + alpha * beta * sem[i] * sum_{u in N(i)} norm(u,i)
    user_next[u] = sum_{i in N(u)} norm(u,i) * item[i]

The final representation is the sum (default) or mean of the layer-0
embedding and every propagated layer.  With ``beta = 0`` the semantic
term vanishes and the update reduces to plain light graph convolution.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import BipartiteGraph
from .kernels import segment_gather
from .semantic import ProjectionHead, SemanticEmbeddingStore, init_projection, project_all

INJECT_MODES = ("every-layer", "first-layer")
READOUT_MODES = ("sum", "mean")

CHECKPOINT_MAGIC = b"P4RC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Hyperparameters needed to initialize a model."""

    dim: int = 64
    n_layers: int = 2
    alpha: float = 1.0
    beta: float = 1.0
    inject: str = "every-layer"
    readout: str = "sum"
    dtype: str = "float32"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.inject not in INJECT_MODES:
            raise ValueError(f"inject must be one of {INJECT_MODES}")
        if self.readout not in READOUT_MODES:
            raise ValueError(f"readout must be one of {READOUT_MODES}")


@dataclass
class ModelParams:
    """Trainable state plus the propagation hyperparameters."""

    E_u: np.ndarray
    E_i: np.ndarray
    head: ProjectionHead
    alpha: float = 1.0
    beta: float = 1.0
    n_layers: int = 2
    inject: str = "every-layer"
    readout: str = "sum"

    def __post_init__(self):
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.inject not in INJECT_MODES:
            raise ValueError(f"inject must be one of {INJECT_MODES}")
        if self.readout not in READOUT_MODES:
            raise ValueError(f"readout must be one of {READOUT_MODES}")

    @property
    def dim(self):
        return int(self.E_u.shape[1])

    @property
    def dtype(self):
        return self.E_u.dtype

    def copy(self):
        return replace(self, E_u=self.E_u.copy(), E_i=self.E_i.copy(), head=self.head.copy())


@dataclass
class ForwardState:
    """Per-layer embeddings and their readout."""

    layers_u: list = field(default_factory=list)
    layers_i: list = field(default_factory=list)
    final_u: np.ndarray = None
    final_i: np.ndarray = None


def init_params(n_users: int, n_items: int, dim: int, dim_raw: int, seed: int,
                alpha: float = 1.0, beta: float = 1.0, n_layers: int = 2,
                inject: str = "every-layer", readout: str = "sum",
                dtype=np.float32) -> ModelParams:
    """Seeded initialization: embedding tables ~ N(0, 2/(rows+dim)),
    projection W uniform over +/- sqrt(6/(dim+dim_raw)), zero bias."""
    rng = np.random.default_rng(seed)
    E_u = rng.normal(0.0, np.sqrt(2.0 / (n_users + dim)), size=(n_users, dim)).astype(dtype)
    E_i = rng.normal(0.0, np.sqrt(2.0 / (n_items + dim)), size=(n_items, dim)).astype(dtype)
    head = init_projection(dim, dim_raw, seed=int(rng.integers(2**31 - 1)), dtype=dtype)
    return ModelParams(E_u, E_i, head, alpha=alpha, beta=beta, n_layers=n_layers,
                       inject=inject, readout=readout)


def init_from_config(config: ModelConfig, n_users: int, n_items: int,
                     dim_raw: int, seed: int) -> ModelParams:
    return init_params(n_users, n_items, config.dim, dim_raw, seed,
                       alpha=config.alpha, beta=config.beta, n_layers=config.n_layers,
                       inject=config.inject, readout=config.readout,
                       dtype=np.dtype(config.dtype))


def propagate_layer(graph: BipartiteGraph, e_u, e_i, sem, alpha: float, beta: float,
                    inject: bool = True):
    """One message-passing step; returns (next user, next item) matrices.

    ``sem`` may be None when ``beta`` is zero or injection is off for
    this layer.  Isolated nodes receive zero vectors.
    """
    if e_u.shape[0] != graph.n_users or e_i.shape[0] != graph.n_items:
        raise ValueError("embedding row counts do not match the graph")
    if e_u.shape[1] != e_i.shape[1]:
        raise ValueError("user and item embedding dims differ")
    dtype = e_u.dtype
    e_u_next = segment_gather(graph.u_indptr, graph.u_indices, graph.u_norm, e_i)
    agg = segment_gather(graph.i_indptr, graph.i_indices, graph.i_norm, e_u)
    e_i_next = alpha * agg
    if inject and beta != 0.0 and sem is not None:
        if sem.shape != e_i.shape:
            raise ValueError(f"semantic matrix shape {sem.shape} != item embedding shape {e_i.shape}")
        scale = (alpha * beta) * graph.item_norm_sum.astype(dtype)
        e_i_next = e_i_next + scale[:, None] * sem
    return e_u_next.astype(dtype, copy=False), e_i_next.astype(dtype, copy=False)


def forward(params: ModelParams, graph: BipartiteGraph,
            store: SemanticEmbeddingStore | None = None) -> ForwardState:
    """Run all propagation layers and the layer readout."""
    sem = None
    if params.beta != 0.0:
        if store is None:
            raise ValueError("beta != 0 requires a semantic embedding store")
        sem = project_all(params.head, store, dtype=params.dtype)

    state = ForwardState(layers_u=[params.E_u], layers_i=[params.E_i])
    e_u, e_i = params.E_u, params.E_i
    for k in range(params.n_layers):
        inject = params.inject == "every-layer" or k == 0
        e_u, e_i = propagate_layer(graph, e_u, e_i, sem, params.alpha, params.beta, inject=inject)
        state.layers_u.append(e_u)
        state.layers_i.append(e_i)
    state.final_u = np.sum(state.layers_u, axis=0)
    state.final_i = np.sum(state.layers_i, axis=0)
    if params.readout == "mean":
        state.final_u = state.final_u / (params.n_layers + 1)
        state.final_i = state.final_i / (params.n_layers + 1)
    return state


def score(state: ForwardState, user_idx: int, item_idx: int) -> float:
    """Preference score: dot product of the final embeddings."""
    return float(state.final_u[user_idx] @ state.final_i[item_idx])


def score_items(state: ForwardState, user_idx: int) -> np.ndarray:
    """Scores of every item for one user."""
    return state.final_i @ state.final_u[user_idx]


def rank_candidates(scores: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Candidates ordered by score descending, ties by ascending index."""
    cand_scores = scores[candidates]
    order = np.lexsort((candidates, -cand_scores))
    return candidates[order]


def recommend_topk(state: ForwardState, user_idx: int, k: int, exclude=frozenset()):
    """Top-k (item_idx, score) pairs over all items not excluded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n_items = state.final_i.shape[0]
    mask = np.ones(n_items, dtype=bool)
    if len(exclude):
        mask[np.fromiter(exclude, dtype=np.int64)] = False
    candidates = np.nonzero(mask)[0]
    if candidates.size == 0:
        return []
    scores = score_items(state, user_idx)
    ranked = rank_candidates(scores, candidates)[:k]
    return [(int(i), float(scores[i])) for i in ranked]


def save_checkpoint(path, params: ModelParams, seed: int, manifest_hash: str,
                    dim_raw: int | None = None, extra: dict | None = None) -> None:
    """Serialize params to a flat deterministic binary file.

    Layout: magic, u32 version, u32 header length, sorted-key JSON
    header, then raw little-endian array bytes in the order E_u, E_i,
    W, b.  No timestamps, so equal inputs give byte-identical files.
    """
    arrays = [("E_u", params.E_u), ("E_i", params.E_i),
              ("W", params.head.W), ("b", params.head.b)]
    header = {
        "version": CHECKPOINT_VERSION,
        "n_users": int(params.E_u.shape[0]),
        "n_items": int(params.E_i.shape[0]),
        "dim": params.dim,
        "dim_raw": int(dim_raw if dim_raw is not None else params.head.dim_raw),
        "n_layers": params.n_layers,
        "alpha": params.alpha,
        "beta": params.beta,
        "inject": params.inject,
        "readout": params.readout,
        "dtype": np.dtype(params.dtype).name,
        "seed": seed,
        "manifest_hash": manifest_hash,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path, expected_manifest_hash: str | None = None):
    """Load a checkpoint; returns (params, header dict).

    When ``expected_manifest_hash`` is given, a mismatch against the
    stored hash is rejected.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if expected_manifest_hash is not None and header["manifest_hash"] != expected_manifest_hash:
            raise CheckpointError(
                "checkpoint was trained against a different dataset manifest "
                f"({header['manifest_hash'][:12]}... != {expected_manifest_hash[:12]}...)")
        dtype = np.dtype(header["dtype"]).newbyteorder("<")
        loaded = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            n_bytes = int(np.prod(shape)) * dtype.itemsize
            buf = fh.read(n_bytes)
            if len(buf) != n_bytes:
                raise CheckpointError(f"{path}: truncated array {spec['name']}")
            loaded[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    head = ProjectionHead(loaded["W"], loaded["b"])
    params = ModelParams(loaded["E_u"], loaded["E_i"], head,
                         alpha=header["alpha"], beta=header["beta"],
                         n_layers=header["n_layers"], inject=header["inject"],
                         readout=header["readout"])
    return params, header


def checkpoint_digest(path) -> str:
    """sha256 of a checkpoint file's bytes."""
    return hashlib.sha256(open(path, "rb").read()).hexdigest()
