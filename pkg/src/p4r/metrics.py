"""Full-ranking top-K metrics and unigram-overlap text scores."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import ForwardState, rank_candidates, score_items
from .semantic import SemanticEmbeddingStore

RANKING_METRICS = ("recall", "ndcg", "mrr", "hit")
EVAL_MODES = ("p4r", "wt", "random")


@dataclass
class MetricReport:
    """Mean metric values keyed ``name@k``; users with empty ground truth
    are excluded from both the means and the count."""

    values: dict = field(default_factory=dict)
    n_users_evaluated: int = 0
    split: str = ""
    mode: str = ""


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def recall_at_k(ranked, relevant, k: int) -> float:
    """|top-k intersect relevant| / |relevant|."""
    hits = sum(1 for item in ranked[:k] if item in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant, k: int) -> float:
    """Binary-relevance NDCG: positional gain 1/log2(p+1), ideal gain
    from packing all relevant items at the top."""
    dcg = 0.0
    for p, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(p + 1)
    idcg = sum(1.0 / math.log2(p + 1) for p in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


def mrr_at_k(ranked, relevant, k: int) -> float:
    """Reciprocal rank of the first relevant item in the top-k; 0 if none."""
    for p, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            return 1.0 / p
    return 0.0


def hit_at_k(ranked, relevant, k: int) -> float:
    """1 if any relevant item appears in the top-k, else 0."""
    return 1.0 if any(item in relevant for item in ranked[:k]) else 0.0


def wt_scores(store: SemanticEmbeddingStore, user_train_items) -> np.ndarray:
    """Untrained scoring directly from raw profile vectors: cosine between
    the mean of the user's covered train-item vectors and each candidate.
    Uncovered candidates score 0; no covered train items scores all 0."""
    covered_train = [i for i in user_train_items if store.coverage[i]]
    scores = np.zeros(store.n_items, dtype=np.float64)
    if not covered_train:
        return scores
    mean = store.vectors[covered_train].astype(np.float64).mean(axis=0)
    mean_norm = np.linalg.norm(mean)
    if mean_norm == 0.0:
        return scores
    V = store.vectors.astype(np.float64)
    norms = np.linalg.norm(V, axis=1)
    ok = store.coverage & (norms > 0)
    scores[ok] = (V[ok] @ mean) / (norms[ok] * mean_norm)
    return scores


def p4r_wt_score(store: SemanticEmbeddingStore, user_train_items, item_idx: int) -> float:
    """Single-candidate form of :func:`wt_scores`."""
    return float(wt_scores(store, user_train_items)[item_idx])


def evaluate(state: ForwardState | None, dataset, split: str, ks, mode: str,
             store: SemanticEmbeddingStore | None = None,
             seed: int = 0) -> MetricReport:
    """Full-ranking evaluation of one split.

    Per user the candidate set is every item minus the user's train
    items (minus val items as well when scoring test).  Rankings come
    from model scores (``p4r``), raw-profile cosine (``wt``), or a
    seeded shuffle (``random``); ties in scored modes break by ascending
    item index.
    """
    if split not in ("val", "test"):
        raise ValueError(f"split must be 'val' or 'test', got {split!r}")
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}")
    if mode == "p4r" and state is None:
        raise ValueError("p4r mode needs a forward state")
    if mode == "wt" and store is None:
        raise ValueError("wt mode needs a semantic embedding store")
    triples = getattr(dataset, split)
    if not triples:
        raise ValueError(f"{split} split is empty")

    train_by_user = {}
    for u, i, _ in dataset.train:
        train_by_user.setdefault(u, set()).add(i)
    val_by_user = {}
    if split == "test":
        for u, i, _ in dataset.val:
            val_by_user.setdefault(u, set()).add(i)
    relevant_by_user = {}
    for u, i, _ in triples:
        relevant_by_user.setdefault(u, set()).add(i)

    ks = sorted(int(k) for k in ks)
    rng = np.random.default_rng(seed)
    sums = {f"{name}@{k}": 0.0 for name in RANKING_METRICS for k in ks}
    n_eval = 0
    all_items = np.arange(dataset.n_items, dtype=np.int64)
    for u in sorted(relevant_by_user):
        relevant = relevant_by_user[u]
        exclude = set(train_by_user.get(u, ()))
        if split == "test":
            exclude |= val_by_user.get(u, set())
        if len(exclude) >= dataset.n_items:
            continue
        mask = np.ones(dataset.n_items, dtype=bool)
        if exclude:
            mask[list(exclude)] = False
        candidates = all_items[mask]
        if mode == "random":
            ranked = candidates[rng.permutation(candidates.shape[0])]
        else:
            scores = score_items(state, u) if mode == "p4r" else wt_scores(store, train_by_user.get(u, ()))
            ranked = rank_candidates(np.asarray(scores, dtype=np.float64), candidates)
        ranked = ranked.tolist()
        n_eval += 1
        for k in ks:
            sums[f"recall@{k}"] += recall_at_k(ranked, relevant, k)
            sums[f"ndcg@{k}"] += ndcg_at_k(ranked, relevant, k)
            sums[f"mrr@{k}"] += mrr_at_k(ranked, relevant, k)
            sums[f"hit@{k}"] += hit_at_k(ranked, relevant, k)

    values = {key: (val / n_eval if n_eval else 0.0) for key, val in sums.items()}
    return MetricReport(values=values, n_users_evaluated=n_eval, split=split, mode=mode)


_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _tokenize(text: str):
    return _TOKEN_RE.findall(text.lower())


def rouge1(reference: str, candidate: str) -> RougeScore:
    """Clipped unigram overlap between two texts.

    Tokens are maximal alphanumeric runs of the lowercased text; the
    overlap counts each distinct token min(ref count, cand count) times.
    Empty denominators yield zero.
    """
    ref_tokens = _tokenize(reference)
    cand_tokens = _tokenize(candidate)
    ref_counts = Counter(ref_tokens)
    cand_counts = Counter(cand_tokens)
    overlap = sum(min(n, cand_counts[tok]) for tok, n in ref_counts.items())
    precision = overlap / len(cand_tokens) if cand_tokens else 0.0
    recall = overlap / len(ref_tokens) if ref_tokens else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(precision, recall, f1)


def rouge1_counts(reference: str, candidate: str):
    """(overlap, ref token count, cand token count) for micro-averaging."""
    ref_counts = Counter(_tokenize(reference))
    cand_counts = Counter(_tokenize(candidate))
    overlap = sum(min(n, cand_counts[tok]) for tok, n in ref_counts.items())
    return overlap, sum(ref_counts.values()), sum(cand_counts.values())


def write_report(report: MetricReport, txt_path, jsonl_path, ks) -> None:
    """Emit the structured-text rows (one per metric@k) and the jsonl
    variant."""
    ks = sorted(int(k) for k in ks)
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"# split={report.split} mode={report.mode} "
                 f"users_evaluated={report.n_users_evaluated}\n")
        for name in RANKING_METRICS:
            for k in ks:
                fh.write(f"{name}@{k}\t{report.values[f'{name}@{k}']:.6f}\n")
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for name in RANKING_METRICS:
            for k in ks:
                fh.write(json.dumps({
                    "metric": name, "k": k,
                    "value": report.values[f"{name}@{k}"],
                    "split": report.split, "mode": report.mode,
                    "n_users": report.n_users_evaluated,
                }) + "\n")
