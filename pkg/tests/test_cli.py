"""End-to-end command behavior: outputs, precedence, determinism, exit codes.

Commands run in-process through ``main(argv)``; a session workspace holds
one synthetic corpus, its prepared dataset directory, and one trained
checkpoint that the eval/recommend tests share.
"""

import json

import numpy as np
import pytest

from p4r.cli import main
from p4r.corpus import load_dataset, manifest_hash
from p4r.graph import build_graph
from p4r.metrics import evaluate
from p4r.model import checkpoint_digest, forward, load_checkpoint
from p4r.semantic import load_embeddings


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Two-block corpus: 30 users, 40 items, full embedding coverage."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    n_items = 40
    lines = ["user_id,item_id,rating"]
    for u in range(30):
        lo = 0 if u < 15 else 20
        items = rng.choice(np.arange(lo, lo + 20), size=14, replace=False)
        for i in sorted(int(x) for x in items):
            lines.append(f"u{u:02d},i{i:02d},{int(rng.integers(3, 6))}")
    (root / "interactions.csv").write_text("\n".join(lines) + "\n")
    d_s = 8
    centers = {0: rng.normal(size=d_s), 1: rng.normal(size=d_s)}
    with open(root / "embeddings.jsonl", "w", encoding="utf-8") as fh:
        for i in range(n_items):
            vec = centers[0 if i < 20 else 1] + 0.1 * rng.normal(size=d_s)
            fh.write(json.dumps({"item_id": f"i{i:02d}",
                                 "vector": [float(x) for x in vec]}) + "\n")
    return root


@pytest.fixture(scope="session")
def prepared(workspace):
    out = workspace / "data"
    rc = main(["--seed", "7", "prepare",
               "--interactions", str(workspace / "interactions.csv"),
               "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="session")
def trained(workspace, prepared):
    out = workspace / "run"
    rc = main(["--seed", "7", "train", "--data", str(prepared),
               "--embeddings", str(workspace / "embeddings.jsonl"),
               "--out", str(out), "--dim", "16", "--n-layers", "2",
               "--max-epochs", "3", "--patience", "3",
               "--batch-size", "64", "--learning-rate", "0.05"])
    assert rc == 0
    return out


class TestPrepare:
    def test_stats_and_files(self, workspace, tmp_path, capsys):
        out = tmp_path / "d"
        rc = main(["--seed", "7", "prepare",
                   "--interactions", str(workspace / "interactions.csv"),
                   "--out", str(out)])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "users 30"
        assert lines[1] == "items 40"
        assert lines[2] == "interactions 420"
        # 1 - 420/(30*40) = 0.65
        assert lines[3] == "sparsity 65.000000%"
        for name in ("manifest.json", "train.csv", "val.csv", "test.csv"):
            assert (out / name).is_file()

    def test_requires_seed(self, workspace, tmp_path, capsys):
        rc = main(["prepare", "--interactions", str(workspace / "interactions.csv"),
                   "--out", str(tmp_path / "d")])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_missing_interactions_file(self, tmp_path, capsys):
        rc = main(["--seed", "0", "prepare", "--interactions",
                   str(tmp_path / "nope.csv"), "--out", str(tmp_path / "d")])
        assert rc == 2

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert main(["--seed", "3", "prepare",
                         "--interactions", str(workspace / "interactions.csv"),
                         "--out", str(out)]) == 0
            outs.append(out)
        for name in ("manifest.json", "train.csv", "val.csv", "test.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_seed_accepted_before_or_after_subcommand(self, workspace, tmp_path):
        base, late, override = (tmp_path / s for s in ("base", "late", "override"))
        csv = str(workspace / "interactions.csv")
        assert main(["--seed", "9", "prepare", "--interactions", csv,
                     "--out", str(base)]) == 0
        assert main(["prepare", "--seed", "9", "--interactions", csv,
                     "--out", str(late)]) == 0
        # the post-subcommand value wins over the pre-subcommand one
        assert main(["--seed", "1", "prepare", "--seed", "9",
                     "--interactions", csv, "--out", str(override)]) == 0
        want = (base / "manifest.json").read_bytes()
        assert (late / "manifest.json").read_bytes() == want
        assert (override / "manifest.json").read_bytes() == want


class TestTrain:
    def test_writes_history_and_checkpoint(self, trained):
        assert (trained / "checkpoint.p4r").is_file()
        rows = [json.loads(line)
                for line in (trained / "history.jsonl").read_text().splitlines()]
        assert len(rows) == 3
        for row in rows:
            assert set(row) == {"epoch", "train_loss", "val_metric", "seconds"}

    def test_prints_best_metric_and_checkpoint(self, workspace, prepared, tmp_path, capsys):
        rc = main(["--seed", "1", "train", "--data", str(prepared),
                   "--beta", "0", "--dim", "8", "--max-epochs", "1",
                   "--batch-size", "64", "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "best ndcg@10 " in out
        assert "checkpoint " in out

    def test_same_seed_same_checkpoint_digest(self, workspace, prepared, tmp_path):
        digests = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            rc = main(["--seed", "5", "train", "--data", str(prepared),
                       "--embeddings", str(workspace / "embeddings.jsonl"),
                       "--out", str(out), "--dim", "8", "--max-epochs", "2",
                       "--batch-size", "64"])
            assert rc == 0
            digests.append(checkpoint_digest(out / "checkpoint.p4r"))
        assert digests[0] == digests[1]

    def test_semantic_term_requires_embeddings(self, prepared, tmp_path, capsys):
        rc = main(["--seed", "0", "train", "--data", str(prepared),
                   "--out", str(tmp_path), "--max-epochs", "1"])
        assert rc == 2
        assert "embeddings" in capsys.readouterr().err

    def test_beta_zero_needs_no_embeddings(self, prepared, tmp_path):
        rc = main(["--seed", "0", "train", "--data", str(prepared),
                   "--beta", "0", "--dim", "8", "--max-epochs", "1",
                   "--batch-size", "64", "--out", str(tmp_path)])
        assert rc == 0

    def test_config_file_sets_values_and_flags_win(self, prepared, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"dim": 8, "beta": 0.0, "max_epochs": 1,
                                      "batch_size": 64, "seed": 2}))
        out_cfg = tmp_path / "from_config"
        assert main(["--config", str(config), "train", "--data", str(prepared),
                     "--out", str(out_cfg)]) == 0
        params, _ = load_checkpoint(out_cfg / "checkpoint.p4r")
        assert params.E_u.shape[1] == 8
        out_flag = tmp_path / "from_flag"
        assert main(["--config", str(config), "train", "--data", str(prepared),
                     "--dim", "4", "--out", str(out_flag)]) == 0
        params, _ = load_checkpoint(out_flag / "checkpoint.p4r")
        assert params.E_u.shape[1] == 4

    def test_unknown_config_key_rejected(self, prepared, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"dimension": 8}))
        rc = main(["--config", str(config), "train", "--data", str(prepared)])
        assert rc == 2
        assert "unknown config keys: dimension" in capsys.readouterr().err

    def test_config_must_be_an_object(self, prepared, tmp_path):
        config = tmp_path / "config.json"
        config.write_text("[1, 2]")
        assert main(["--config", str(config), "train", "--data", str(prepared)]) == 2
        config.write_text("{not json")
        assert main(["--config", str(config), "train", "--data", str(prepared)]) == 2

    def test_divergence_exits_with_numeric_code(self, prepared, tmp_path, capsys):
        with np.errstate(all="ignore"):
            rc = main(["--seed", "0", "train", "--data", str(prepared),
                       "--beta", "0", "--dim", "16", "--max-epochs", "3",
                       "--batch-size", "64", "--learning-rate", "1e300",
                       "--out", str(tmp_path)])
        assert rc == 3
        assert "non-finite" in capsys.readouterr().err


class TestEval:
    def test_reports_for_both_splits(self, workspace, prepared, trained, tmp_path, capsys):
        rc = main(["--seed", "0", "eval", "--data", str(prepared),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--out", str(tmp_path)])
        assert rc == 0
        out_lines = capsys.readouterr().out.splitlines()
        assert out_lines[0].startswith("val users=")
        assert out_lines[1].startswith("test users=")
        for split in ("val", "test"):
            lines = (tmp_path / f"report_{split}.txt").read_text().splitlines()
            assert lines[0].startswith(f"# split={split} mode=p4r users_evaluated=")
            assert len(lines) == 1 + 8  # 4 metrics x ks [10, 20]
            names = [line.split("\t")[0] for line in lines[1:]]
            assert names == ["recall@10", "recall@20", "ndcg@10", "ndcg@20",
                             "mrr@10", "mrr@20", "hit@10", "hit@20"]

    def test_matches_library_evaluation(self, workspace, prepared, trained, tmp_path):
        rc = main(["--seed", "0", "eval", "--data", str(prepared),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--ks", "5", "--out", str(tmp_path)])
        assert rc == 0
        dataset = load_dataset(prepared)
        params, _ = load_checkpoint(trained / "checkpoint.p4r",
                                    expected_manifest_hash=manifest_hash(prepared))
        store = load_embeddings(workspace / "embeddings.jsonl", dataset.n_items,
                                item_index=dataset.item_index)
        state = forward(params, build_graph(dataset), store)
        want = evaluate(state, dataset, "val", [5], "p4r")
        rows = [json.loads(line)
                for line in (tmp_path / "report_val.jsonl").read_text().splitlines()]
        assert len(rows) == 4
        for row in rows:
            key = f"{row['metric']}@{row['k']}"
            assert row["value"] == pytest.approx(want.values[key], rel=1e-12)
            assert row["n_users"] == want.n_users_evaluated

    def test_checkpoint_bound_to_dataset(self, workspace, prepared, trained, tmp_path, capsys):
        other = tmp_path / "other"
        assert main(["--seed", "8", "prepare",
                     "--interactions", str(workspace / "interactions.csv"),
                     "--out", str(other)]) == 0
        rc = main(["--seed", "0", "eval", "--data", str(other),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--out", str(tmp_path)])
        assert rc == 2
        assert "checkpoint" in capsys.readouterr().err.lower()

    def test_random_mode_needs_no_checkpoint(self, prepared, tmp_path):
        rc = main(["--seed", "0", "eval", "--data", str(prepared),
                   "--mode", "random", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "report_test.txt").is_file()

    def test_wt_mode_scores_from_raw_vectors(self, workspace, prepared, tmp_path):
        rc = main(["--seed", "0", "eval", "--data", str(prepared),
                   "--mode", "wt",
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--out", str(tmp_path)])
        assert rc == 0

    def test_p4r_mode_requires_checkpoint(self, prepared, tmp_path):
        rc = main(["--seed", "0", "eval", "--data", str(prepared),
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_requires_seed(self, workspace, prepared, trained, tmp_path):
        rc = main(["eval", "--data", str(prepared),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--out", str(tmp_path)])
        assert rc == 2


class TestRouge:
    @pytest.fixture()
    def text_files(self, tmp_path):
        meta = tmp_path / "metadata.jsonl"
        with open(meta, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"item_id": "i00", "intrinsic": {"title": "alpha"},
                                 "extrinsic": {"review": "beta"}}) + "\n")
            fh.write(json.dumps({"item_id": "i01", "intrinsic": {"title": "gamma"},
                                 "extrinsic": {"review": "delta"}}) + "\n")
            fh.write(json.dumps({"item_id": "i02", "intrinsic": {"title": "epsilon"},
                                 "extrinsic": {}}) + "\n")
        profiles = tmp_path / "profiles.jsonl"
        with open(profiles, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"item_id": "i00", "raw_text": "alpha beta"}) + "\n")
            fh.write(json.dumps({"item_id": "i01", "raw_text": "gamma gamma gamma"}) + "\n")
            fh.write(json.dumps({"item_id": "zz", "raw_text": "whatever"}) + "\n")
        return meta, profiles

    def test_macro_scores(self, text_files, tmp_path, capsys):
        meta, profiles = text_files
        rc = main(["rouge", "--metadata", str(meta), "--profiles", str(profiles),
                   "--out", str(tmp_path)])
        assert rc == 0
        captured = capsys.readouterr()
        assert "skipped 1" in captured.err
        lines = (tmp_path / "rouge.txt").read_text().splitlines()
        assert lines[0] == "# pairs=2 skipped=1 agg=macro"
        # pair 1 scores (1, 1, 1); pair 2 (1/3, 1/2, 2/5)
        assert lines[1] == "precision\t0.666667"
        assert lines[2] == "recall\t0.750000"
        assert lines[3] == "f1\t0.700000"
        items = [json.loads(line)
                 for line in (tmp_path / "rouge_items.jsonl").read_text().splitlines()]
        assert [row["item_id"] for row in items] == ["i00", "i01"]
        assert items[1]["f1"] == pytest.approx(0.4)

    def test_micro_scores(self, text_files, tmp_path):
        meta, profiles = text_files
        rc = main(["rouge", "--metadata", str(meta), "--profiles", str(profiles),
                   "--micro", "--out", str(tmp_path)])
        assert rc == 0
        lines = (tmp_path / "rouge.txt").read_text().splitlines()
        assert lines[0] == "# pairs=2 skipped=1 agg=micro"
        # overlap 3 of 5 candidate and 4 reference tokens
        assert lines[1] == "precision\t0.600000"
        assert lines[2] == "recall\t0.750000"
        assert lines[3] == "f1\t0.666667"

    def test_empty_profiles_reports_zero_pairs(self, text_files, tmp_path, capsys):
        meta, _ = text_files
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        rc = main(["rouge", "--metadata", str(meta), "--profiles", str(empty),
                   "--out", str(tmp_path)])
        assert rc == 0
        captured = capsys.readouterr()
        assert "no (reference, profile) pairs" in captured.err
        assert "pairs 0" in captured.out
        lines = (tmp_path / "rouge.txt").read_text().splitlines()
        assert lines[0] == "# pairs=0 skipped=0 agg=macro"
        assert lines[3] == "f1\t0.000000"

    def test_malformed_profile_row_rejected(self, text_files, tmp_path):
        meta, _ = text_files
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"item_id": "i00"}\n')
        assert main(["rouge", "--metadata", str(meta), "--profiles", str(bad),
                     "--out", str(tmp_path)]) == 2


class TestRecommend:
    def test_rows_and_unknown_user(self, workspace, prepared, trained, tmp_path, capsys):
        rc = main(["recommend", "--data", str(prepared),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--users", "u00", "zz", "--k", "5", "--out", str(tmp_path)])
        assert rc == 0
        assert "recommendations" in capsys.readouterr().out
        rows = [json.loads(line)
                for line in (tmp_path / "recommendations.jsonl").read_text().splitlines()]
        assert len(rows) == 2
        assert rows[0]["user_id"] == "u00"
        assert len(rows[0]["items"]) == 5
        scores = [item["score"] for item in rows[0]["items"]]
        assert scores == sorted(scores, reverse=True)
        assert all(item["item_id"].startswith("i") for item in rows[0]["items"])
        assert rows[1] == {"user_id": "zz", "error": "unknown user"}

    def test_train_items_never_recommended(self, workspace, prepared, trained, tmp_path):
        rc = main(["recommend", "--data", str(prepared),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--users", "u03", "--k", "10", "--out", str(tmp_path)])
        assert rc == 0
        dataset = load_dataset(prepared)
        uidx = dataset.user_index["u03"]
        seen = {i for u, i, _ in dataset.train if u == uidx}
        row = json.loads((tmp_path / "recommendations.jsonl").read_text().splitlines()[0])
        got = {dataset.item_index[item["item_id"]] for item in row["items"]}
        assert got.isdisjoint(seen)

    def test_requires_users(self, workspace, prepared, trained, tmp_path):
        rc = main(["recommend", "--data", str(prepared),
                   "--checkpoint", str(trained / "checkpoint.p4r"),
                   "--embeddings", str(workspace / "embeddings.jsonl"),
                   "--out", str(tmp_path)])
        assert rc == 2
