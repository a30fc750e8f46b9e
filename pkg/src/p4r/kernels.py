"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The two kernel families here dominate training time: edge-wise weighted
gather/scatter over the bipartite graph (message passing) and the fused
pairwise-ranking loss/gradient accumulation over a batch of triples.

Both families ship in two implementations that must agree numerically:

* ``*_numba`` -- ``@njit``-compiled loops, used by default when numba
  imports cleanly.
* ``*_numpy`` -- vectorized numpy, always available.

Set the environment variable ``P4R_NUMBA=0`` (also accepted: ``false``,
``off``) before import to force the numpy path, e.g. for debugging or on
platforms where numba is unavailable.  ``benchmarks/bench_kernels.py``
times both paths side by side.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.special import expit

_flag = os.environ.get("P4R_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

NUMBA_ENABLED = False
if _want_numba:
    try:
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def segment_gather_numpy(indptr, indices, weights, src):
    """Per-row weighted sums of gathered rows: out[r] = sum_e w[e] * src[col[e]].

    ``indptr``/``indices``/``weights`` form a CSR adjacency; ``src`` is a
    (n_cols, d) matrix.  Rows with no incident edges come out all-zero.
    """
    n_rows = indptr.shape[0] - 1
    out = np.zeros((n_rows, src.shape[1]), dtype=src.dtype)
    if indices.shape[0] == 0:
        return out
    gathered = src[indices] * weights[:, None]
    deg = np.diff(indptr)
    nz = deg > 0
    # reduceat over starts of non-empty rows: empty rows own no edge slots,
    # so each segment covers exactly one row's edges.
    out[nz] = np.add.reduceat(gathered, indptr[:-1][nz], axis=0)
    return out


def bpr_batch_numpy(final_u, final_i, users, pos, neg, grad_u, grad_i):
    """Pairwise ranking loss over (user, pos, neg) triples, accumulating
    gradients w.r.t. the final embeddings into ``grad_u``/``grad_i``.

    Returns the summed loss  sum softplus(-(f(u,i) - f(u,j))).
    """
    fu = final_u[users]
    fi = final_i[pos]
    fj = final_i[neg]
    diff = fi - fj
    x = np.einsum("bd,bd->b", fu, diff)
    loss = float(np.logaddexp(0.0, -x).sum())
    # d loss / d x = -sigmoid(-x)
    g = (-expit(-x)).astype(final_u.dtype)
    np.add.at(grad_u, users, g[:, None] * diff)
    np.add.at(grad_i, pos, g[:, None] * fu)
    np.add.at(grad_i, neg, -g[:, None] * fu)
    return loss


if NUMBA_ENABLED:

    @njit(cache=True, parallel=True)
    def _segment_gather_jit(indptr, indices, weights, src, out):  # pragma: no cover - exercised via wrapper
        n_rows = indptr.shape[0] - 1
        d = src.shape[1]
        for r in prange(n_rows):
            for e in range(indptr[r], indptr[r + 1]):
                c = indices[e]
                w = weights[e]
                for k in range(d):
                    out[r, k] += w * src[c, k]

    def segment_gather_numba(indptr, indices, weights, src):
        out = np.zeros((indptr.shape[0] - 1, src.shape[1]), dtype=src.dtype)
        if indices.shape[0]:
            _segment_gather_jit(indptr, indices, weights.astype(src.dtype), src, out)
        return out

    @njit(cache=True)
    def _bpr_batch_jit(final_u, final_i, users, pos, neg, grad_u, grad_i):  # pragma: no cover - exercised via wrapper
        d = final_u.shape[1]
        loss = 0.0
        for t in range(users.shape[0]):
            u = users[t]
            i = pos[t]
            j = neg[t]
            x = 0.0
            for k in range(d):
                x += final_u[u, k] * (final_i[i, k] - final_i[j, k])
            if x >= 0.0:
                loss += np.log1p(np.exp(-x))
                g = -np.exp(-x) / (1.0 + np.exp(-x))
            else:
                loss += -x + np.log1p(np.exp(x))
                g = -1.0 / (1.0 + np.exp(x))
            for k in range(d):
                du = g * (final_i[i, k] - final_i[j, k])
                gu = g * final_u[u, k]
                grad_u[u, k] += du
                grad_i[i, k] += gu
                grad_i[j, k] -= gu
        return loss

    def bpr_batch_numba(final_u, final_i, users, pos, neg, grad_u, grad_i):
        return float(_bpr_batch_jit(final_u, final_i, users, pos, neg, grad_u, grad_i))

    segment_gather = segment_gather_numba
    bpr_batch = bpr_batch_numba
else:
    segment_gather = segment_gather_numpy
    bpr_batch = bpr_batch_numpy
