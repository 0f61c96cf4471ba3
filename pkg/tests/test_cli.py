import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from gradjoin import cli
from gradjoin import workbench as W
from gradjoin.plan import Plan, plan_to_doc

TINY = {
    "gen-data": {"generator": {"n_entities": 200, "n_predicates": 24, "n_classes": 3, "n_triples": 900,
                               "sizes": [2, 3, 4, 5], "queries_per_size": 3}},
    "train": {"train": {"epochs": 3, "batch_size": 32, "d_e": 4, "hidden": 8}},
    "optimize": {"search": {"iterations": 15}, "sizes": [3, 4], "queries_per_size": 1},
    "landscape": {"pairs": 2, "points": 5, "sizes": [4]},
    "bench-runtime": {"search": {"iterations": 10}, "sizes": [3, 4, 5], "repetitions": 1, "dp_max_n": 4},
    "front-sweep": {"search": {"iterations": 10}, "sizes": [4], "queries_per_size": 2, "ks": [1, 2, 3]},
}


def run(*argv):
    assert cli.main([str(a) for a in argv]) == 0


def pipeline(root: Path, config: Path):
    data, model = root / "data", root / "model"
    run("--config", config, "--seed", 4, "gen-data", "--out", data)
    run("--config", config, "train", "--data", data / "manifest.json", "--out", model)
    common = ["--data", data / "manifest.json", "--model", model / "model.json"]
    run("--config", config, "optimize", *common, "--out", root / "opt")
    run("--config", config, "landscape", *common, "--out", root / "land")
    run("--config", config, "bench-runtime", *common, "--out", root / "bench")
    run("--config", config, "front-sweep", *common, "--out", root / "sweep")
    return root


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    f = tmp_path_factory.mktemp("cfg") / "tiny.json"
    f.write_text(json.dumps(TINY))
    return f


@pytest.fixture(scope="module")
def runs(tmp_path_factory, config):
    return pipeline(tmp_path_factory.mktemp("a"), config), config


def _csvs(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*.csv"))
        if "timing" not in p.name
    }


def test_gen_data_outputs(runs):
    root, _ = runs
    m = json.loads((root / "data" / "manifest.json").read_text())
    assert m["counts"]["queries"] == 2 * 4 * 3
    assert m["counts"]["examples"] == 3 * m["counts"]["queries"]
    assert m["generator"]["seed"] == 4
    ds = W.load_dataset(root / "data" / "manifest.json")
    assert len(ds.plans) == m["counts"]["examples"]
    rows = W.read_csv(root / "data" / "examples.csv")
    assert [int(r["c_out"]) for r in rows] == [c for _, _, c in ds.plans]
    prov = json.loads((root / "data" / "provenance.json").read_text())
    assert prov["outputs"]["plans.jsonl"] == W.sha256_file(root / "data" / "plans.jsonl")


def test_train_outputs(runs):
    root, _ = runs
    summary = W.read_csv(root / "model" / "train_summary.csv")
    assert [r["shape"] for r in summary] == ["path", "star", "all"]
    assert float(summary[-1]["best_val_median_q"]) >= 1.0
    metrics = W.read_csv(root / "model" / "train_metrics.csv")
    assert len(metrics) == 2 * 3


def test_optimize_outputs(runs):
    root, _ = runs
    rows = W.read_csv(root / "opt" / "results.csv")
    assert len(rows) == 2 * 2 * 4
    assert all(r["error"] == "" for r in rows)
    for r in rows:
        n = int(r["n"])
        assert sorted(int(k) for k in r["order"].split()) == list(range(1, n + 1))
        if r["method"] == "gbs_k5":
            assert int(r["evaluations"]) == 15 * 5
    # dp is exact under any cost that is additive over prefixes, but never worse than greedy here either way
    by = {(r["query_id"], r["method"]): float(r["predicted_cost"]) for r in rows}
    qids = {r["query_id"] for r in rows}
    assert all(by[(q, "gbs_k5")] <= by[(q, "gbs_k1")] for q in qids)
    summary = W.read_csv(root / "opt" / "summary.csv")
    assert len(summary) == 2 * 4


def test_landscape_outputs(runs):
    root, _ = runs
    rows = W.read_csv(root / "land" / "landscape.csv")
    assert len(rows) == 2 * 5
    ends = [r for r in rows if r["alpha"] in ("0.0", "1.0")]
    assert all(float(r["p_struct"]) == pytest.approx(0.0, abs=1e-9) for r in ends)
    assert len(W.read_csv(root / "land" / "pairs.csv")) == 2


def test_bench_outputs(runs):
    root, _ = runs
    counts = W.read_csv(root / "bench" / "bench_counts.csv")
    greedy = {int(r["n"]): int(r["evaluations"]) for r in counts if r["method"] == "greedy"}
    assert greedy == {3: 7, 4: 15, 5: 26}
    dp = [r for r in counts if r["method"] == "dp"]
    assert [r["evaluations"] for r in dp if r["n"] == "5"] == [""]
    fit = W.read_csv(root / "bench" / "bench_timing_fit.csv")
    assert {r["statistic"] for r in fit} >= {"power_law_exponent", "ratio_3_4"}


def test_front_sweep_outputs(runs):
    root, _ = runs
    summary = W.read_csv(root / "sweep" / "sweep_summary.csv")
    med = [float(r["median_predicted_cost"]) for r in summary]
    assert [r["k"] for r in summary] == ["1", "2", "3"]
    assert med == sorted(med, reverse=True)
    rows = W.read_csv(root / "sweep" / "sweep.csv")
    for q in {r["query_id"] for r in rows}:
        c = [float(r["predicted_cost"]) for r in rows if r["query_id"] == q]
        assert c == sorted(c, reverse=True)


def test_reruns_are_byte_identical(runs, tmp_path):
    root, config = runs
    again = pipeline(tmp_path, config)
    a, b = _csvs(root), _csvs(again)
    assert a.keys() == b.keys() and len(a) == 10
    assert a == b
    assert (root / "model" / "model.json").read_bytes() == (again / "model" / "model.json").read_bytes()


def test_landscape_from_plan_files(runs, tmp_path):
    root, config = runs
    ds = W.load_dataset(root / "data" / "manifest.json")
    q = next(q for q in ds.queries if q.n == 4)
    for name, order in (("p1.json", [0, 1, 2, 3]), ("p2.json", [3, 2, 1, 0])):
        (tmp_path / name).write_text(json.dumps(plan_to_doc(Plan.left_linear(order), q.id)))
    run("landscape", "--data", root / "data" / "manifest.json", "--model", root / "model" / "model.json",
        "--query", q.id, "--plan1", tmp_path / "p1.json", "--plan2", tmp_path / "p2.json",
        "--points", 3, "--out", tmp_path / "o")
    rows = W.read_csv(tmp_path / "o" / "landscape.csv")
    assert [r["alpha"] for r in rows] == ["0.0", "0.5", "1.0"]
    # mixtures of valid left-linear plans satisfy every linear degree constraint and stay acyclic
    assert float(rows[1]["p_struct"]) == pytest.approx(0.0, abs=1e-9)
    assert float(rows[0]["predicted_cost"]) != float(rows[2]["predicted_cost"])


def test_flag_parsing():
    assert cli._ints("3-6") == (3, 4, 5, 6)
    assert cli._ints("4,6,8") == (4, 6, 8)
    args = cli.build_parser().parse_args(["--seed", "9", "optimize", "--sizes", "4,6", "--profile", "LUBM-Path"])
    spec = cli.resolve_spec(args)
    assert spec.seed == 9 and spec.sizes == (4, 6) and spec.profile == "LUBM-Path"
    args = cli.build_parser().parse_args(["gen-data", "--sizes", "2-3", "--shapes", "star"])
    spec = cli.resolve_spec(args)
    assert spec.generator == {"sizes": [2, 3], "shapes": ["star"]}


def test_config_sections_and_precedence(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"train": {"seed": 3, "train": {"epochs": 9}}}))
    spec = cli.resolve_spec(cli.build_parser().parse_args(["--config", str(f), "train", "--epochs", "4"]))
    assert spec.seed == 3 and spec.train == {"epochs": 4}
    f.write_text(json.dumps({"pairs": 7}))
    spec = cli.resolve_spec(cli.build_parser().parse_args(["--config", str(f), "landscape"]))
    assert spec.pairs == 7


def test_errors_exit_nonzero(tmp_path, capsys):
    assert cli.main(["train", "--data", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"optimize": {"bogus": 1}}))
    assert cli.main(["--config", str(f), "optimize"]) == 2
    assert cli.main(["optimize", "--profile", "nope", "--data", str(tmp_path / "x")]) == 2


def test_tampered_dataset_rejected(runs, tmp_path):
    root, _ = runs
    shutil.copytree(root / "data", tmp_path / "d")
    with open(tmp_path / "d" / "triples.txt", "a") as fh:
        fh.write("e1 p1 e2\n")
    with pytest.raises(ValueError, match="checksum"):
        W.load_dataset(tmp_path / "d" / "manifest.json")


def test_fit_helpers():
    ns = np.array([4, 6, 8, 10])
    assert W.power_law_exponent(ns, 0.01 * ns**1.5) == pytest.approx(1.5)
    assert W.log_linear_slope(ns, np.exp(0.7 * ns)) == pytest.approx(0.7)


def test_csv_formatting(tmp_path):
    p = W.write_csv(tmp_path / "x.csv", ["a", "b", "c"], [(0.1, float("nan"), True), (None, 3, "s")])
    assert p.read_text() == "a,b,c\n0.1,,1\n,3,s\n"
