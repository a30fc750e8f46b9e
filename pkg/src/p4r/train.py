"""Pairwise ranking trainer: negative sampling, loss, gradients, Adam,
early stopping.

Gradients flow through the full propagation stack.  The forward pass is
linear in all embedding inputs, so the backward pass reuses the same
two sparse propagation operators with roles swapped: the user-side
operator pushes item-layer gradients back to users and vice versa.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics as _metrics
from .graph import BipartiteGraph
from .kernels import bpr_batch, segment_gather
from .model import ForwardState, ModelConfig, ModelParams, forward, init_from_config
from .semantic import SemanticEmbeddingStore

EVAL_METRICS = ("ndcg", "recall", "mrr", "hit")


class SamplingError(ValueError):
    pass


class NumericError(RuntimeError):
    """Training diverged or produced non-finite values."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 2048
    max_epochs: int = 100
    patience: int | None = 10
    eval_metric: str = "ndcg@10"
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    l2: float = 0.0
    train_projection: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 (or None to disable early stopping)")
        name, _, k = self.eval_metric.partition("@")
        if name not in EVAL_METRICS or not k.isdigit() or int(k) < 1:
            raise ValueError(f"eval_metric must look like 'ndcg@10', got {self.eval_metric!r}")


@dataclass
class AdamState:
    """Bias-corrected first/second moments per parameter block."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ModelParams):
        blocks = {"E_u": params.E_u, "E_i": params.E_i, "W": params.head.W, "b": params.head.b}
        return cls(0, {k: np.zeros_like(a) for k, a in blocks.items()},
                   {k: np.zeros_like(a) for k, a in blocks.items()})


def sample_negative(user_idx: int, train_item_set, n_items: int, rng) -> int:
    """Uniform draw over items the user has not interacted with in train;
    rerolls on collision."""
    if len(train_item_set) >= n_items:
        raise SamplingError(f"user {user_idx} has interacted with every item")
    while True:
        j = int(rng.integers(n_items))
        if j not in train_item_set:
            return j


def _as_triple_arrays(triples):
    if isinstance(triples, tuple) and len(triples) == 3 and isinstance(triples[0], np.ndarray):
        return triples
    arr = np.asarray(list(triples), dtype=np.int64)
    if arr.size == 0:
        return (np.empty(0, np.int64),) * 3
    return arr[:, 0], arr[:, 1], arr[:, 2]


def bpr_loss(state: ForwardState, triples) -> float:
    """Summed pairwise loss  -sum ln sigmoid(f_u(i) - f_u(j))  over the
    given (user, pos_item, neg_item) triples, evaluated stably."""
    users, pos, neg = _as_triple_arrays(triples)
    if users.size == 0:
        return 0.0
    fu = state.final_u[users]
    x = np.einsum("bd,bd->b", fu, state.final_i[pos] - state.final_i[neg])
    return float(np.logaddexp(0.0, -x).sum())


def bpr_gradients(params: ModelParams, graph: BipartiteGraph,
                  store: SemanticEmbeddingStore | None, triples,
                  train_projection: bool = True):
    """Loss and analytic gradients w.r.t. every parameter block.

    Returns ``(loss, grads)`` with grads keyed E_u, E_i, W, b.  The
    projection gradients are zero when beta is 0 or the head is frozen.
    """
    users, pos, neg = _as_triple_arrays(triples)
    dtype = params.dtype
    state = forward(params, graph, store)

    g_final_u = np.zeros_like(state.final_u)
    g_final_i = np.zeros_like(state.final_i)
    loss = bpr_batch(state.final_u, state.final_i, users, pos, neg, g_final_u, g_final_i)

    K = params.n_layers
    w = np.asarray(1.0 if params.readout == "sum" else 1.0 / (K + 1), dtype=dtype)
    alpha, beta = params.alpha, params.beta

    use_sem = beta != 0.0 and store is not None
    g_sem = np.zeros((graph.n_items, params.dim), dtype=dtype) if use_sem else None
    c = graph.item_norm_sum.astype(dtype)

    # grads w.r.t. layer-K embeddings, then walk the steps backwards
    gu_next = w * g_final_u
    gi_next = w * g_final_i
    for s in range(K - 1, -1, -1):
        injected = params.inject == "every-layer" or s == 0
        if use_sem and injected:
            g_sem += (alpha * beta) * c[:, None] * gi_next
        gu_cur = w * g_final_u + alpha * segment_gather(
            graph.u_indptr, graph.u_indices, graph.u_norm, gi_next)
        gi_cur = w * g_final_i + segment_gather(
            graph.i_indptr, graph.i_indices, graph.i_norm, gu_next)
        gu_next, gi_next = gu_cur, gi_cur

    grads = {"E_u": gu_next, "E_i": gi_next,
             "W": np.zeros_like(params.head.W), "b": np.zeros_like(params.head.b)}

    if use_sem and train_projection and K > 0:
        V = store.vectors.astype(dtype, copy=False)
        pre = V @ params.head.W.T.astype(dtype, copy=False) + params.head.b.astype(dtype, copy=False)
        # rectifier subgradient at 0 is 0; uncovered rows never contribute
        active = (pre > 0) & store.coverage[:, None]
        d_pre = np.where(active, g_sem, 0.0).astype(dtype, copy=False)
        grads["W"] = d_pre.T @ V
        grads["b"] = d_pre.sum(axis=0)

    return loss, grads


def grad_step(params: ModelParams, graph: BipartiteGraph,
              store: SemanticEmbeddingStore | None, batch,
              opt: AdamState, config: TrainConfig):
    """One Adam update from one batch; mutates params and opt in place.

    Raises :class:`NumericError` naming the offending block when a
    gradient goes non-finite.
    """
    users, pos, neg = _as_triple_arrays(batch)
    if users.size == 0:
        raise ValueError("batch is empty")
    loss, grads = bpr_gradients(params, graph, store, (users, pos, neg),
                                train_projection=config.train_projection)
    blocks = {"E_u": params.E_u, "E_i": params.E_i, "W": params.head.W, "b": params.head.b}

    if config.l2 > 0.0:
        for name, arr in blocks.items():
            grads[name] = grads[name] + config.l2 * arr
            loss += 0.5 * config.l2 * float(np.sum(arr.astype(np.float64) ** 2))

    opt.step += 1
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_epsilon, config.learning_rate
    bc1 = 1.0 - b1 ** opt.step
    bc2 = 1.0 - b2 ** opt.step
    for name, arr in blocks.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name}")
        m = opt.m[name]
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, opt, loss


def _train_item_sets(dataset):
    sets = [set() for _ in range(dataset.n_users)]
    for u, i, _ in dataset.train:
        sets[u].add(i)
    return sets


def fit(dataset, graph: BipartiteGraph, store: SemanticEmbeddingStore | None,
        model_config: ModelConfig, train_config: TrainConfig):
    """Train to convergence or the epoch budget; returns (best params,
    history).

    Per epoch: shuffle train interactions, draw one fresh negative per
    positive, update per batch, then score the validation split.  The
    best-validation snapshot is kept and returned; training stops after
    ``patience`` epochs without improvement.  History rows carry
    ``{epoch, train_loss, val_metric, seconds}`` with train_loss averaged
    per interaction.
    """
    cfg = train_config
    dim_raw = store.dim_raw if store is not None else 1
    params = init_from_config(model_config, dataset.n_users, dataset.n_items,
                              dim_raw, seed=cfg.seed)

    has_val = len(dataset.val) > 0
    if cfg.patience is not None and not has_val:
        raise ValueError("early stopping needs a non-empty validation split")
    metric_name, _, metric_k = cfg.eval_metric.partition("@")
    metric_k = int(metric_k)

    ss = np.random.SeedSequence(cfg.seed)
    rng_shuffle, rng_neg = (np.random.default_rng(s) for s in ss.spawn(2))
    user_sets = _train_item_sets(dataset)
    train_arr = np.asarray(dataset.train, dtype=np.int64)

    opt = AdamState.for_params(params)
    history = []
    best_params = None
    best_metric = -np.inf
    epochs_since_best = 0

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        perm = rng_shuffle.permutation(train_arr.shape[0])
        epoch_loss = 0.0
        for lo in range(0, perm.shape[0], cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            users = train_arr[idx, 0]
            pos = train_arr[idx, 1]
            neg = np.fromiter(
                (sample_negative(int(u), user_sets[u], dataset.n_items, rng_neg) for u in users),
                dtype=np.int64, count=idx.shape[0])
            params, opt, loss = grad_step(params, graph, store, (users, pos, neg), opt, cfg)
            epoch_loss += loss
        train_loss = epoch_loss / train_arr.shape[0]
        if not np.isfinite(train_loss):
            raise NumericError(f"training loss diverged at epoch {epoch}")

        val_metric = None
        if has_val:
            state = forward(params, graph, store)
            report = _metrics.evaluate(state, dataset, "val", [metric_k], "p4r")
            val_metric = report.values[f"{metric_name}@{metric_k}"]
            if val_metric > best_metric:
                best_metric = val_metric
                best_params = params.copy()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_metric": val_metric, "seconds": time.perf_counter() - t0})
        if cfg.patience is not None and epochs_since_best >= cfg.patience:
            break

    return (best_params if best_params is not None else params), history
