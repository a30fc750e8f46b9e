"""Command-line pipelines: prepare, train, eval, rouge, recommend.

Every command is a pure function of config file + flags + input files
+ seed.  Precedence: built-in defaults, then config-file fields, then
flags.  The seed never falls back to the wall clock; seeded commands
(prepare, train, eval) refuse to run without one.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import (
    ParseError,
    ValidationError,
    build_dataset,
    load_dataset,
    load_item_metadata,
    manifest_hash,
    parse_interactions,
    save_dataset,
    sparsity_percent,
    split_dataset,
)
from .graph import build_graph
from .metrics import evaluate, rouge1, rouge1_counts, write_report
from .model import (
    CheckpointError,
    ModelConfig,
    forward,
    load_checkpoint,
    recommend_topk,
    save_checkpoint,
)
from .semantic import EmbeddingLoadError, load_embeddings
from .train import NumericError, SamplingError, TrainConfig, fit

_DEFAULTS = {
    "seed": None,
    "out": ".",
    # prepare
    "interactions": None,
    "format": None,
    "min_user_deg": 1,
    "min_item_deg": 1,
    "max_users": None,
    "ratios": [0.8, 0.1, 0.1],
    # train / eval / recommend inputs
    "data": None,
    "embeddings": None,
    "checkpoint": None,
    # model
    "dim": 64,
    "n_layers": 2,
    "alpha": 1.0,
    "beta": 1.0,
    "inject": "every-layer",
    "readout": "sum",
    # train
    "learning_rate": 1e-3,
    "batch_size": 2048,
    "max_epochs": 100,
    "patience": 10,
    "eval_metric": "ndcg@10",
    "l2": 0.0,
    "train_projection": True,
    # eval
    "ks": [10, 20],
    "mode": "p4r",
    # rouge
    "metadata": None,
    "profiles": None,
    "micro": False,
    # recommend
    "users": None,
    "k": 10,
}


class CliError(Exception):
    """Carries the exit code alongside the message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CliError(2, f"config file not found: {path}")
    try:
        loaded = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise CliError(2, f"config file {path} is not valid JSON: {err}") from err
    if not isinstance(loaded, dict):
        raise CliError(2, f"config file {path} must hold a JSON object")
    unknown = sorted(set(loaded) - set(_DEFAULTS))
    if unknown:
        raise CliError(2, f"unknown config keys: {', '.join(unknown)}")
    return loaded


def _merge_config(args: argparse.Namespace) -> dict:
    """defaults < config file < flags; flags count only when given."""
    cfg = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        cfg.update(_load_config_file(config_path))
    flags = {
        key: value
        for key, value in vars(args).items()
        if key in _DEFAULTS and value is not None
    }
    if getattr(args, "freeze_projection", None):
        flags["train_projection"] = False
    cfg.update(flags)
    return cfg


def _require_seed(cfg) -> int:
    seed = cfg["seed"]
    if seed is None:
        raise CliError(2, "an explicit seed is required (pass --seed or set 'seed' in the config)")
    return int(seed)


def _require_path(cfg, key: str) -> Path:
    value = cfg[key]
    if value is None:
        raise CliError(2, f"missing required input: --{key.replace('_', '-')}")
    path = Path(value)
    if not path.exists():
        raise CliError(2, f"{key} path does not exist: {path}")
    return path


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_prepare(cfg) -> int:
    """Parse interactions, build + split the dataset, write the dataset
    directory, and print its statistics."""
    path = _require_path(cfg, "interactions")
    seed = _require_seed(cfg)
    fmt = cfg["format"] or ("jsonl" if path.suffix == ".jsonl" else "csv")
    ratios = tuple(float(r) for r in cfg["ratios"])
    if len(ratios) != 3:
        raise CliError(2, "ratios must be three fractions (train val test)")
    records = parse_interactions(path, fmt)
    dataset = build_dataset(records, int(cfg["min_user_deg"]), int(cfg["min_item_deg"]),
                            seed=seed, max_users=cfg["max_users"])
    dataset = split_dataset(dataset, ratios, seed=seed)
    out = _out_dir(cfg)
    save_dataset(dataset, out, seed=seed, ratios=ratios)
    pct = sparsity_percent(dataset.n_users, dataset.n_items, dataset.n_interactions)
    print(f"users {dataset.n_users}")
    print(f"items {dataset.n_items}")
    print(f"interactions {dataset.n_interactions}")
    print(f"sparsity {pct}%")
    return 0


def _load_store_if_needed(cfg, dataset, beta: float):
    """Raw profile vectors are mandatory whenever beta keeps the
    semantic term alive; optional (and loaded when given) otherwise."""
    if cfg["embeddings"] is not None:
        path = _require_path(cfg, "embeddings")
        return load_embeddings(path, dataset.n_items, item_index=dataset.item_index)
    if beta != 0.0:
        raise CliError(2, "beta != 0 needs --embeddings (the item update consumes profile "
                          "vectors); pass the file or set beta to 0")
    return None


def cmd_train(cfg) -> int:
    """Train per config; write best checkpoint + history; print the best
    validation metric."""
    data_dir = _require_path(cfg, "data")
    seed = _require_seed(cfg)
    dataset = load_dataset(data_dir)
    mhash = manifest_hash(data_dir)
    model_config = ModelConfig(dim=int(cfg["dim"]), n_layers=int(cfg["n_layers"]),
                               alpha=float(cfg["alpha"]), beta=float(cfg["beta"]),
                               inject=cfg["inject"], readout=cfg["readout"])
    store = _load_store_if_needed(cfg, dataset, model_config.beta)
    patience = cfg["patience"]
    train_config = TrainConfig(learning_rate=float(cfg["learning_rate"]),
                               batch_size=int(cfg["batch_size"]),
                               max_epochs=int(cfg["max_epochs"]),
                               patience=None if patience is None else int(patience),
                               eval_metric=cfg["eval_metric"], seed=seed,
                               l2=float(cfg["l2"]),
                               train_projection=bool(cfg["train_projection"]))
    graph = build_graph(dataset)
    params, history = fit(dataset, graph, store, model_config, train_config)
    out = _out_dir(cfg)
    with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    ckpt = out / "checkpoint.p4r"
    save_checkpoint(ckpt, params, seed=seed, manifest_hash=mhash)
    best = max((row["val_metric"] for row in history if row["val_metric"] is not None),
               default=None)
    if best is None:
        print("best val metric: n/a (no validation evaluations ran)")
    else:
        print(f"best {train_config.eval_metric} {best:.6f}")
    print(f"checkpoint {ckpt}")
    return 0


def cmd_eval(cfg) -> int:
    """Write val and test metric reports for the requested mode."""
    data_dir = _require_path(cfg, "data")
    seed = _require_seed(cfg)
    dataset = load_dataset(data_dir)
    mode = cfg["mode"]
    if mode not in ("p4r", "wt", "random"):
        raise CliError(2, f"mode must be p4r, wt, or random, got {mode!r}")
    ks = [int(k) for k in cfg["ks"]]
    state = None
    store = None
    if mode == "p4r":
        ckpt = _require_path(cfg, "checkpoint")
        params, _ = load_checkpoint(ckpt, expected_manifest_hash=manifest_hash(data_dir))
        store = _load_store_if_needed(cfg, dataset, params.beta)
        state = forward(params, build_graph(dataset), store)
    elif mode == "wt":
        path = _require_path(cfg, "embeddings")
        store = load_embeddings(path, dataset.n_items, item_index=dataset.item_index)
    out = _out_dir(cfg)
    for split in ("val", "test"):
        report = evaluate(state, dataset, split, ks, mode, store=store, seed=seed)
        write_report(report, out / f"report_{split}.txt", out / f"report_{split}.jsonl", ks)
        values = " ".join(f"{name}={value:.6f}" for name, value in sorted(report.values.items()))
        print(f"{split} users={report.n_users_evaluated} {values}")
    return 0


def cmd_rouge(cfg) -> int:
    """Pair profiles with metadata by item id and report unigram-overlap
    scores (macro mean by default, micro with --micro)."""
    meta_path = _require_path(cfg, "metadata")
    prof_path = _require_path(cfg, "profiles")
    references = {}
    for meta in load_item_metadata(meta_path):
        parts = list(meta.intrinsic.values()) + list(meta.extrinsic.values())
        references[meta.item_id] = "\n".join(parts)
    pairs = []
    skipped = 0
    with open(prof_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                item_id = row["item_id"]
                candidate = row["raw_text"]
            except (json.JSONDecodeError, KeyError, TypeError) as err:
                raise CliError(2, f"{prof_path} line {line_no}: bad profile row ({err})") from err
            if item_id not in references:
                skipped += 1
                continue
            pairs.append((item_id, references[item_id], candidate))

    rows = [(item_id, rouge1(ref, cand)) for item_id, ref, cand in pairs]
    if cfg["micro"]:
        overlap = ref_total = cand_total = 0
        for _, ref, cand in pairs:
            o, r, c = rouge1_counts(ref, cand)
            overlap += o
            ref_total += r
            cand_total += c
        precision = overlap / cand_total if cand_total else 0.0
        recall = overlap / ref_total if ref_total else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        agg = "micro"
    else:
        n = len(rows)
        precision = sum(s.precision for _, s in rows) / n if n else 0.0
        recall = sum(s.recall for _, s in rows) / n if n else 0.0
        f1 = sum(s.f1 for _, s in rows) / n if n else 0.0
        agg = "macro"

    out = _out_dir(cfg)
    with open(out / "rouge.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# pairs={len(pairs)} skipped={skipped} agg={agg}\n")
        fh.write(f"precision\t{precision:.6f}\n")
        fh.write(f"recall\t{recall:.6f}\n")
        fh.write(f"f1\t{f1:.6f}\n")
    with open(out / "rouge_items.jsonl", "w", encoding="utf-8") as fh:
        for item_id, s in rows:
            fh.write(json.dumps({"item_id": item_id, "precision": s.precision,
                                 "recall": s.recall, "f1": s.f1}, sort_keys=True) + "\n")
    if skipped:
        print(f"warning: skipped {skipped} profile(s) with no matching metadata item id",
              file=sys.stderr)
    if not pairs:
        print("warning: no (reference, profile) pairs found", file=sys.stderr)
    print(f"pairs {len(pairs)}")
    print(f"precision {precision:.6f}")
    print(f"recall {recall:.6f}")
    print(f"f1 {f1:.6f}")
    return 0


def cmd_recommend(cfg) -> int:
    """Top-k unseen items per requested user id, as jsonl."""
    data_dir = _require_path(cfg, "data")
    ckpt = _require_path(cfg, "checkpoint")
    if not cfg["users"]:
        raise CliError(2, "no user ids given (pass --users)")
    k = int(cfg["k"])
    dataset = load_dataset(data_dir)
    params, _ = load_checkpoint(ckpt, expected_manifest_hash=manifest_hash(data_dir))
    store = _load_store_if_needed(cfg, dataset, params.beta)
    state = forward(params, build_graph(dataset), store)
    train_sets = {}
    for u, i, _ in dataset.train:
        train_sets.setdefault(u, set()).add(i)
    item_ids = [None] * dataset.n_items
    for raw, idx in dataset.item_index.items():
        item_ids[idx] = raw
    out = _out_dir(cfg)
    path = out / "recommendations.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for raw in cfg["users"]:
            uidx = dataset.user_index.get(raw)
            if uidx is None:
                row = {"user_id": raw, "error": "unknown user"}
            else:
                top = recommend_topk(state, uidx, k, exclude=train_sets.get(uidx, set()))
                row = {"user_id": raw,
                       "items": [{"item_id": item_ids[i], "score": s} for i, s in top]}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"recommendations {path}")
    return 0


_COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "rouge": cmd_rouge,
    "recommend": cmd_recommend,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p4r", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="random seed (no default)")
    parser.add_argument("--out", default=None, help="output directory (default: .)")

    # Shared flags repeat on each subcommand with SUPPRESS defaults so a
    # value given after the subcommand wins without erasing one given before.
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=argparse.SUPPRESS)
    shared.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    shared.add_argument("--out", default=argparse.SUPPRESS)

    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("prepare", parents=[shared],
                        help="parse, filter, split, and save a dataset")
    p.add_argument("--interactions", default=None, help="interactions csv or jsonl")
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--min-user-deg", type=int, default=None)
    p.add_argument("--min-item-deg", type=int, default=None)
    p.add_argument("--max-users", type=int, default=None)
    p.add_argument("--ratios", type=float, nargs=3, default=None,
                   metavar=("TRAIN", "VAL", "TEST"))

    t = subs.add_parser("train", parents=[shared], help="train a model on a prepared dataset")
    t.add_argument("--data", default=None, help="prepared dataset directory")
    t.add_argument("--embeddings", default=None, help="item profile vectors (jsonl or binary)")
    t.add_argument("--dim", type=int, default=None)
    t.add_argument("--n-layers", type=int, default=None)
    t.add_argument("--alpha", type=float, default=None)
    t.add_argument("--beta", type=float, default=None)
    t.add_argument("--inject", choices=("every-layer", "first-layer"), default=None)
    t.add_argument("--readout", choices=("sum", "mean"), default=None)
    t.add_argument("--learning-rate", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--max-epochs", type=int, default=None)
    t.add_argument("--patience", type=int, default=None)
    t.add_argument("--eval-metric", default=None)
    t.add_argument("--l2", type=float, default=None)
    t.add_argument("--freeze-projection", action="store_true", default=None)

    e = subs.add_parser("eval", parents=[shared], help="write val/test metric reports")
    e.add_argument("--data", default=None)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--embeddings", default=None)
    e.add_argument("--mode", choices=("p4r", "wt", "random"), default=None)
    e.add_argument("--ks", type=int, nargs="+", default=None)

    r = subs.add_parser("rouge", parents=[shared],
                        help="unigram overlap of profiles against metadata")
    r.add_argument("--metadata", default=None, help="item metadata jsonl")
    r.add_argument("--profiles", default=None, help="generated profiles jsonl")
    r.add_argument("--micro", action="store_true", default=None)

    c = subs.add_parser("recommend", parents=[shared], help="top-k items per user")
    c.add_argument("--data", default=None)
    c.add_argument("--checkpoint", default=None)
    c.add_argument("--embeddings", default=None)
    c.add_argument("--users", nargs="+", default=None, help="raw user ids")
    c.add_argument("--k", type=int, default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (ParseError, ValidationError, EmbeddingLoadError, CheckpointError,
            SamplingError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
