"""User-item bipartite graph with symmetric edge normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def norm_coeff(deg_u: int, deg_i: int) -> float:
    """Symmetric normalization 1 / (sqrt(deg_u) * sqrt(deg_i))."""
    if deg_u < 1 or deg_i < 1:
        raise ValueError(f"degrees must be >= 1, got ({deg_u}, {deg_i})")
    return 1.0 / (math.sqrt(deg_u) * math.sqrt(deg_i))


@dataclass
class BipartiteGraph:
    """CSR adjacency of the train interactions, both directions.

    ``u_indptr``/``u_indices`` list each user's items (sorted ascending)
    with ``u_norm`` carrying the per-edge coefficient; the ``i_*`` arrays
    mirror the item side.  ``item_norm_sum[i]`` caches the sum of edge
    norms incident to item i, which scales the per-item semantic term
    during propagation.  Immutable after construction.
    """

    n_users: int
    n_items: int
    u_indptr: np.ndarray
    u_indices: np.ndarray
    u_norm: np.ndarray
    i_indptr: np.ndarray
    i_indices: np.ndarray
    i_norm: np.ndarray
    user_deg: np.ndarray
    item_deg: np.ndarray
    item_norm_sum: np.ndarray

    @property
    def n_edges(self):
        return int(self.u_indices.shape[0])

    def user_items(self, u: int) -> np.ndarray:
        """Sorted item indices interacted with by user ``u``."""
        return self.u_indices[self.u_indptr[u]:self.u_indptr[u + 1]]

    def item_users(self, i: int) -> np.ndarray:
        """Sorted user indices that interacted with item ``i``."""
        return self.i_indices[self.i_indptr[i]:self.i_indptr[i + 1]]


def build_graph(dataset) -> BipartiteGraph:
    """Build the bipartite graph from the dataset's train split.

    Items that never occur in train are kept as isolated nodes (empty
    adjacency rows).  Raises on an empty split or out-of-range indices.
    """
    train = dataset.train
    if not train:
        raise ValueError("train split is empty")
    n, m = dataset.n_users, dataset.n_items

    users = np.fromiter((t[0] for t in train), dtype=np.int64, count=len(train))
    items = np.fromiter((t[1] for t in train), dtype=np.int64, count=len(train))
    if users.min() < 0 or users.max() >= n or items.min() < 0 or items.max() >= m:
        raise ValueError("interaction index out of range for the dataset")

    user_deg = np.bincount(users, minlength=n).astype(np.int64)
    item_deg = np.bincount(items, minlength=m).astype(np.int64)
    edge_norm = 1.0 / np.sqrt(user_deg[users].astype(np.float64) * item_deg[items].astype(np.float64))

    order_u = np.lexsort((items, users))
    u_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(user_deg, out=u_indptr[1:])
    u_indices = items[order_u]
    u_norm = edge_norm[order_u]

    order_i = np.lexsort((users, items))
    i_indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(item_deg, out=i_indptr[1:])
    i_indices = users[order_i]
    i_norm = edge_norm[order_i]

    item_norm_sum = np.bincount(items, weights=edge_norm, minlength=m)

    return BipartiteGraph(n, m, u_indptr, u_indices, u_norm,
                          i_indptr, i_indices, i_norm,
                          user_deg, item_deg, item_norm_sum)


def dump_edges(graph: BipartiteGraph, path) -> None:
    """Debug dump: one ``u<TAB>i<TAB>norm`` line per edge, user-major order."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in range(graph.n_users):
            lo, hi = graph.u_indptr[u], graph.u_indptr[u + 1]
            for e in range(lo, hi):
                fh.write(f"{u}\t{graph.u_indices[e]}\t{graph.u_norm[e]:.12g}\n")
