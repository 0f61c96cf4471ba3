"""Experiment pipelines behind the command line.

Each ``cmd_*`` takes a spec dataclass, writes CSV files into the spec's
output directory and a ``provenance.json`` sidecar (config echo plus
SHA-256 of every input and output).  Everything except wall-clock timing
is a pure function of the spec and its seed; timings go to their own
``*timing*.csv`` files so the remaining outputs can be compared byte for
byte across reruns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__, costmodel, discrete, relax
from . import tensor as T
from .plan import Plan, Query, encode, interpolate, plan_from_doc, plan_to_doc, validate
from .storage import (
    CardinalityOracle,
    TripleStore,
    c_out_true,
    load_queries,
    load_triples,
    save_queries,
    save_triples,
)
from .synth import GenConfig, generate_queries, generate_synthetic

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


# -- plumbing ---------------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_json(path: str | Path, doc) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def write_provenance(
    out: Path, command: str, spec, inputs: Sequence[Path] = (), outputs: Sequence[Path] = (), notes: dict | None = None
) -> Path:
    doc = {
        "command": command,
        "config": spec_to_dict(spec),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "versions": {"package": __version__, "python": platform.python_version(), "numpy": np.__version__},
        "platform": platform.platform(),
        "timing": "wall-clock around search calls only, single process, sequential",
    }
    if notes:
        doc["notes"] = notes
    return write_json(out / "provenance.json", doc)


def spec_to_dict(spec) -> dict:
    d = asdict(spec)
    for k, v in list(d.items()):
        if isinstance(v, tuple):
            d[k] = list(v)
    return d


def spec_from_dict(cls, d: dict | None):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    for f in fields(cls):
        if f.name in d and isinstance(d[f.name], list) and f.name not in ("search",):
            d[f.name] = tuple(d[f.name])
    return cls(**d)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def search_config(profile: str, overrides: dict | None, seed: int) -> relax.SearchConfig:
    merged = relax.profile(profile).to_dict()
    overrides = dict(overrides or {})
    if "weights" in overrides:
        merged["weights"] = {**merged["weights"], **overrides.pop("weights")}
    merged.update(overrides)
    merged["seed"] = seed
    return relax.SearchConfig.from_dict(merged)


# -- dataset ----------------------------------------------------------------------


@dataclass
class Dataset:
    root: Path
    manifest: dict
    store: TripleStore
    queries: list[Query]
    plans: list[tuple[Query, Plan, int]]

    @property
    def generator(self) -> GenConfig:
        return GenConfig.from_dict(self.manifest["generator"])

    def query(self, query_id: str) -> Query:
        for q in self.queries:
            if q.id == query_id:
                return q
        raise KeyError(f"no query {query_id!r} in dataset")

    def input_files(self) -> list[Path]:
        return [self.root / "manifest.json"] + [self.root / f for f in self.manifest["files"].values()]


def load_dataset(manifest_path: str | Path) -> Dataset:
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('format_version')!r}")
    root = manifest_path.parent
    files = manifest["files"]
    for key, name in files.items():
        digest = sha256_file(root / name)
        if digest != manifest["sha256"][key]:
            raise ValueError(f"{name} does not match the manifest checksum")
    store = load_triples(root / files["triples"])
    queries = load_queries(root / files["queries"], store)
    by_id = {q.id: q for q in queries}
    plans = []
    with open(root / files["plans"], encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            plans.append((by_id[doc["query_id"]], plan_from_doc(doc), int(doc["c_out"])))
    return Dataset(root, manifest, store, queries, plans)


def training_examples(ds: Dataset, d_e: int) -> list[costmodel.TrainingExample]:
    feats: dict[str, np.ndarray] = {}
    out = []
    for q, plan, cost in ds.plans:
        if q.id not in feats:
            feats[q.id] = costmodel.build_features(q, d_e, ds.store)
        out.append(costmodel.TrainingExample(feats[q.id], encode(plan), float(cost), q.id, q.shape))
    return out


def fresh_queries(ds: Dataset, shapes, sizes, per_size: int, seed: int, prefix: str) -> list[Query]:
    """Seeded queries over the dataset's store, disjoint in id from the training set."""
    cfg = replace(ds.generator, shapes=tuple(shapes), sizes=tuple(sizes), queries_per_size=per_size)
    qs = generate_queries(ds.store, cfg, np.random.default_rng(seed))
    return [replace(q, id=f"{prefix}-{q.id}") for q in qs]


# -- gen-data ---------------------------------------------------------------------


@dataclass
class GenDataSpec:
    out: str = "runs/data"
    seed: int = 1
    plans_per_query: int = 3
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.plans_per_query < 1:
            raise ValueError("need at least one plan per query")


def cmd_gen_data(spec: GenDataSpec) -> Path:
    """Store, queries and random left-linear plans labelled with exact C_out."""
    out = _out_dir(spec.out)
    gen = GenConfig.from_dict({**spec.generator, "seed": spec.seed})
    store, queries = generate_synthetic(gen)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    save_triples(store, out / "triples.txt")
    save_queries(queries, store, out / "queries.json")
    rows = []
    with open(out / "plans.jsonl", "w", encoding="utf-8") as fh:
        for q in queries:
            oracle = CardinalityOracle(store, q)
            for i in range(spec.plans_per_query):
                plan = Plan.left_linear(rng.permutation(q.n).tolist())
                cost = c_out_true(store, q, plan, oracle).cost
                doc = plan_to_doc(plan, q.id)
                doc.update(plan_index=i, order=[k + 1 for k in plan.leaf_order()], c_out=cost)
                fh.write(json.dumps(doc, sort_keys=True) + "\n")
                rows.append((q.id, q.shape, q.n, i, " ".join(str(k + 1) for k in plan.leaf_order()), cost))
    write_csv(out / "examples.csv", ["query_id", "shape", "n", "plan_index", "order", "c_out"], rows)
    files = {"triples": "triples.txt", "queries": "queries.json", "plans": "plans.jsonl", "examples": "examples.csv"}
    manifest = {
        "format_version": MANIFEST_VERSION,
        "generator": gen.to_dict(),
        "plans_per_query": spec.plans_per_query,
        "files": files,
        "sha256": {k: sha256_file(out / v) for k, v in files.items()},
        "counts": {"triples": len(store), "queries": len(queries), "examples": len(rows)},
    }
    path = write_json(out / "manifest.json", manifest)
    write_provenance(out, "gen-data", spec, outputs=[out / f for f in files.values()] + [path])
    log.info("wrote %d labelled plans for %d queries to %s", len(rows), len(queries), out)
    return path


# -- train ------------------------------------------------------------------------


@dataclass
class TrainSpec:
    data: str = "runs/data/manifest.json"
    out: str = "runs/model"
    seed: int = 0
    train: dict = field(default_factory=dict)


def cmd_train(spec: TrainSpec) -> tuple[Path, float]:
    """Fit the cost model(s); returns the model file and the pooled
    validation median Q-error."""
    out = _out_dir(spec.out)
    ds = load_dataset(spec.data)
    cfg = costmodel.TrainConfig(**{**spec.train, "seed": spec.seed})
    examples = training_examples(ds, cfg.d_e)
    started = time.perf_counter()
    models, reports, pooled = costmodel.train_models(examples, cfg)
    seconds = time.perf_counter() - started
    model_path = out / "model.json"
    costmodel.save_models(models, model_path)
    metrics = write_csv(
        out / "train_metrics.csv",
        ["shape", "epoch", "train_mse", "val_median_q"],
        [
            (shape, e, m, q)
            for shape, r in reports.items()
            for e, (m, q) in enumerate(zip(r.train_mse, r.val_median_q))
        ],
    )
    rows = [(shape, r.n_train, r.n_val, r.best_epoch, r.best_val_median_q) for shape, r in reports.items()]
    rows.append(("all", sum(r.n_train for r in reports.values()), sum(r.n_val for r in reports.values()), None, pooled))
    summary = write_csv(out / "train_summary.csv", ["shape", "n_train", "n_val", "best_epoch", "best_val_median_q"], rows)
    timing = write_csv(out / "train_timing.csv", ["seconds"], [(seconds,)])
    write_provenance(
        out, "train", spec, inputs=ds.input_files(), outputs=[model_path, metrics, summary, timing],
        notes={"train_config": asdict(cfg)},
    )
    log.info("pooled validation median q-error %.3f", pooled)
    return model_path, pooled


def _load_model_and_data(data: str, model: str):
    return load_dataset(data), costmodel.load_models(model)


# -- optimize ---------------------------------------------------------------------

METHODS = ("greedy", "dp", "gbs_k1", "gbs_k5")


@dataclass
class OptimizeSpec:
    data: str = "runs/data/manifest.json"
    model: str = "runs/model/model.json"
    out: str = "runs/optimize"
    seed: int = 0
    profile: str = "defaults"
    search: dict = field(default_factory=dict)
    shapes: tuple[str, ...] = ("star", "path")
    sizes: tuple[int, ...] = (4, 6, 8)
    queries_per_size: int = 20
    methods: tuple[str, ...] = METHODS
    dp_max_n: int = 10
    workers: int = 1

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {list(METHODS)}")


def run_method(method: str, query: Query, params, x_query: np.ndarray, cfg: relax.SearchConfig, dp_max_n: int, workers: int = 1):
    """(plan, predicted cost, evaluations) of one search method."""
    if method == "greedy":
        r = discrete.greedy(query, discrete.LearnedCost(params, x_query, query.n))
        return r.plan, r.cost, r.evaluations
    if method == "dp":
        r = discrete.dp_left_linear(query, discrete.LearnedCost(params, x_query, query.n), max_n=dp_max_n)
        return r.plan, r.cost, r.evaluations
    k = int(method.split("_k")[1])
    r = relax.optimize_multi(query, params, x_query, replace(cfg, k=k), workers=workers)
    return r.plan, r.cost, cfg.iterations * k


def cmd_optimize(spec: OptimizeSpec) -> Path:
    """Every method on the same seeded queries under the same model."""
    out = _out_dir(spec.out)
    ds, models = _load_model_and_data(spec.data, spec.model)
    cfg = search_config(spec.profile, spec.search, spec.seed)
    queries = fresh_queries(ds, spec.shapes, spec.sizes, spec.queries_per_size, spec.seed, "eval")
    rows, timing = [], []
    for q in queries:
        params = models.for_shape(q.shape)
        x = costmodel.build_features(q, params.d_e, ds.store)
        oracle = CardinalityOracle(ds.store, q)
        for method in spec.methods:
            started = time.perf_counter()
            try:
                plan, cost, evals = run_method(method, q, params, x, cfg, spec.dp_max_n, spec.workers)
                seconds = time.perf_counter() - started
                if validate(encode(plan)):
                    raise RuntimeError(f"{method} produced an invalid plan {plan}")
                true = c_out_true(ds.store, q, plan, oracle).cost
                rows.append((q.id, q.shape, q.n, method, cost, true, evals, " ".join(str(k + 1) for k in plan.leaf_order()), ""))
            except (discrete.BudgetError, relax.SearchError, RuntimeError) as exc:
                seconds = time.perf_counter() - started
                rows.append((q.id, q.shape, q.n, method, math.nan, None, None, "", str(exc)))
            timing.append((q.id, method, seconds))
        log.info("optimized %s", q.id)
    header = ["query_id", "shape", "n", "method", "predicted_cost", "true_cost", "evaluations", "order", "error"]
    results = write_csv(out / "results.csv", header, rows)
    summary = write_csv(
        out / "summary.csv",
        ["n", "method", "queries", "median_predicted_cost", "median_true_cost"],
        _optimize_summary(rows, spec.sizes, spec.methods),
    )
    times = write_csv(out / "timing.csv", ["query_id", "method", "seconds"], timing)
    write_provenance(
        out, "optimize", spec, inputs=ds.input_files() + [Path(spec.model)], outputs=[results, summary, times],
        notes={"search_config": cfg.to_dict()},
    )
    return results


def _optimize_summary(rows, sizes, methods):
    for n in sizes:
        for m in methods:
            sel = [r for r in rows if r[2] == n and r[3] == m and not r[8]]
            if not sel:
                yield (n, m, 0, math.nan, math.nan)
                continue
            yield (n, m, len(sel), float(np.median([r[4] for r in sel])), float(np.median([r[5] for r in sel])))


# -- landscape --------------------------------------------------------------------


@dataclass
class LandscapeSpec:
    data: str = "runs/data/manifest.json"
    model: str = "runs/model/model.json"
    out: str = "runs/landscape"
    seed: int = 0
    profile: str = "defaults"
    search: dict = field(default_factory=dict)
    query: str = ""
    plan1: str = ""
    plan2: str = ""
    pairs: int = 50
    points: int = 101
    shapes: tuple[str, ...] = ("star", "path")
    sizes: tuple[int, ...] = (6,)

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("need at least two interpolation points")
        if bool(self.plan1) != bool(self.plan2):
            raise ValueError("give both plan files or neither")


def landscape_curve(params, x_query: np.ndarray, n: int, P1: np.ndarray, P2: np.ndarray, alphas, weights) -> list[tuple[float, float, float]]:
    """(alpha, predicted cost, weighted structural penalty) along A(alpha)."""
    if P1.shape != P2.shape:
        raise T.ShapeError(f"plan matrices differ in shape: {P1.shape} vs {P2.shape}")
    out = []
    for a in alphas:
        A = T.Tensor(interpolate(P1, P2, float(a)))
        cost = float(params.to_cost(costmodel.forward(params, x_query, A).item()))
        pen = relax.structural_penalty(relax.all_penalties(A, n), weights).item()
        out.append((float(a), cost, pen))
    return out


def _read_plan(path: str) -> Plan:
    with open(path, encoding="utf-8") as fh:
        return plan_from_doc(json.load(fh))


def cmd_landscape(spec: LandscapeSpec) -> Path:
    """Model cost and penalty along straight lines between two plans."""
    out = _out_dir(spec.out)
    ds, models = _load_model_and_data(spec.data, spec.model)
    weights = search_config(spec.profile, spec.search, spec.seed).effective_weights()
    alphas = np.linspace(0.0, 1.0, spec.points)
    rng = np.random.default_rng(spec.seed)
    inputs = ds.input_files() + [Path(spec.model)]

    jobs: list[tuple[Query, Plan, Plan]] = []
    if spec.plan1:
        p1, p2 = _read_plan(spec.plan1), _read_plan(spec.plan2)
        if p1.n != p2.n:
            raise T.ShapeError(f"plans cover {p1.n} and {p2.n} patterns")
        q = ds.query(spec.query) if spec.query else next(q for q in ds.queries if q.n == p1.n)
        jobs.append((q, p1, p2))
        inputs += [Path(spec.plan1), Path(spec.plan2)]
    else:
        pool = [ds.query(spec.query)] if spec.query else [
            q for q in ds.queries if q.n in spec.sizes and q.shape in spec.shapes
        ]
        if not pool:
            raise ValueError("no query matches the requested shapes and sizes")
        for _ in range(spec.pairs):
            q = pool[rng.integers(len(pool))]
            while True:
                p1 = Plan.left_linear(rng.permutation(q.n).tolist())
                p2 = Plan.left_linear(rng.permutation(q.n).tolist())
                if not p1.same_as(p2):
                    break
            jobs.append((q, p1, p2))

    curve_rows, pair_rows = [], []
    mid = int(np.argmin(np.abs(alphas - 0.5)))
    for i, (q, p1, p2) in enumerate(jobs):
        params = models.for_shape(q.shape)
        x = costmodel.build_features(q, params.d_e, ds.store)
        curve = landscape_curve(params, x, q.n, encode(p1), encode(p2), alphas, weights)
        curve_rows += [(i, q.id, a, c, p) for a, c, p in curve]
        lo, hi = max(mid - 1, 0), min(mid + 1, len(curve) - 1)
        slope = (curve[hi][1] - curve[lo][1]) / (curve[hi][0] - curve[lo][0])
        c1, c2 = curve[0][1], curve[-1][1]
        toward = (slope < 0) == (c2 < c1) if c1 != c2 else True
        pair_rows.append((i, q.id, str(p1), str(p2), c1, c2, slope, toward))
    curves = write_csv(out / "landscape.csv", ["pair", "query_id", "alpha", "predicted_cost", "p_struct"], curve_rows)
    pairs = write_csv(
        out / "pairs.csv",
        ["pair", "query_id", "plan1", "plan2", "cost1", "cost2", "slope_mid", "toward_cheaper"],
        pair_rows,
    )
    write_provenance(out, "landscape", spec, inputs=inputs, outputs=[curves, pairs])
    return curves


# -- bench-runtime ----------------------------------------------------------------


@dataclass
class BenchSpec:
    data: str = "runs/data/manifest.json"
    model: str = "runs/model/model.json"
    out: str = "runs/bench"
    seed: int = 0
    profile: str = "defaults"
    search: dict = field(default_factory=lambda: {"iterations": 500})
    shape: str = "path"
    sizes: tuple[int, ...] = tuple(range(3, 15))
    repetitions: int = 3
    dp_max_n: int = 11
    methods: tuple[str, ...] = ("gbs", "greedy", "dp")


def power_law_exponent(ns, seconds) -> float:
    """Slope of log(seconds) against log(n)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(seconds, float)), 1)[0])


def log_linear_slope(ns, seconds) -> float:
    """Slope of log(seconds) against n (exponential growth rate)."""
    return float(np.polyfit(np.asarray(ns, float), np.log(np.asarray(seconds, float)), 1)[0])


def cmd_bench_runtime(spec: BenchSpec) -> Path:
    """Search wall-clock against query size, run sequentially."""
    out = _out_dir(spec.out)
    ds, models = _load_model_and_data(spec.data, spec.model)
    cfg = search_config(spec.profile, spec.search, spec.seed)
    queries = fresh_queries(ds, (spec.shape,), spec.sizes, 1, spec.seed, "bench")
    counts, timing = [], []
    med: dict[str, dict[int, float]] = {m: {} for m in spec.methods}
    for q in queries:
        params = models.for_shape(q.shape)
        x = costmodel.build_features(q, params.d_e, ds.store)
        for method in spec.methods:
            if method == "dp" and q.n > spec.dp_max_n:
                counts.append((q.n, method, q.id, None, None))
                timing.append((q.n, method, math.nan, 0))
                continue
            name = {"gbs": "gbs_k1"}.get(method, method)
            secs = []
            for _ in range(spec.repetitions):
                started = time.perf_counter()
                plan, cost, evals = run_method(name, q, params, x, cfg, spec.dp_max_n)
                secs.append(time.perf_counter() - started)
            counts.append((q.n, method, q.id, evals, cost))
            med[method][q.n] = float(np.median(secs))
            timing.append((q.n, method, med[method][q.n], spec.repetitions))
        log.info("benchmarked n=%d", q.n)
    fit_rows = []
    for method, by_n in med.items():
        ns = sorted(by_n)
        if len(ns) >= 2:
            fit_rows.append((method, "power_law_exponent", power_law_exponent(ns, [by_n[n] for n in ns])))
            fit_rows.append((method, "log_linear_slope", log_linear_slope(ns, [by_n[n] for n in ns])))
        for a, b in zip(ns, ns[1:]):
            fit_rows.append((method, f"ratio_{a}_{b}", by_n[b] / by_n[a]))
    c = write_csv(out / "bench_counts.csv", ["n", "method", "query_id", "evaluations", "predicted_cost"], counts)
    t = write_csv(out / "bench_timing.csv", ["n", "method", "median_seconds", "repetitions"], timing)
    f = write_csv(out / "bench_timing_fit.csv", ["method", "statistic", "value"], fit_rows)
    write_provenance(out, "bench-runtime", spec, inputs=ds.input_files() + [Path(spec.model)], outputs=[c, t, f])
    return t


# -- front-sweep ------------------------------------------------------------------


@dataclass
class FrontSweepSpec:
    data: str = "runs/data/manifest.json"
    model: str = "runs/model/model.json"
    out: str = "runs/front_sweep"
    seed: int = 0
    profile: str = "defaults"
    search: dict = field(default_factory=dict)
    shapes: tuple[str, ...] = ("path",)
    sizes: tuple[int, ...] = (6, 8)
    queries_per_size: int = 20
    ks: tuple[int, ...] = (1, 2, 4, 6, 8)
    workers: int = 1

    def __post_init__(self):
        if not self.ks or min(self.ks) < 1:
            raise ValueError("front counts must be positive")


def front_costs(query: Query, params, x_query, cfg: relax.SearchConfig, k_max: int, workers: int = 1) -> list[float]:
    """Projected-plan cost of each of the first ``k_max`` fronts."""
    res = relax.optimize_multi(query, params, x_query, replace(cfg, k=k_max), workers=workers)
    return [tr.plan_cost for tr in res.traces]


def cmd_front_sweep(spec: FrontSweepSpec) -> Path:
    """Best cost over the first k fronts, for each k; fronts nest across k."""
    out = _out_dir(spec.out)
    ds, models = _load_model_and_data(spec.data, spec.model)
    cfg = search_config(spec.profile, spec.search, spec.seed)
    queries = fresh_queries(ds, spec.shapes, spec.sizes, spec.queries_per_size, spec.seed, "sweep")
    ks = sorted(set(spec.ks))
    rows = []
    per_k: dict[int, list[float]] = {k: [] for k in ks}
    for q in queries:
        params = models.for_shape(q.shape)
        x = costmodel.build_features(q, params.d_e, ds.store)
        costs = front_costs(q, params, x, cfg, ks[-1], spec.workers)
        for k in ks:
            best = min(costs[:k])
            per_k[k].append(best)
            rows.append((q.id, q.shape, q.n, k, best))
        log.info("swept %s", q.id)
    medians = {k: float(np.median(v)) for k, v in per_k.items()}
    total = medians[ks[0]] - medians[ks[-1]]
    summary = [
        (k, medians[k], (medians[ks[0]] - medians[k]) / total if total > 0 else 1.0) for k in ks
    ]
    a = write_csv(out / "sweep.csv", ["query_id", "shape", "n", "k", "predicted_cost"], rows)
    b = write_csv(out / "sweep_summary.csv", ["k", "median_predicted_cost", "improvement_fraction"], summary)
    write_provenance(
        out, "front-sweep", spec, inputs=ds.input_files() + [Path(spec.model)], outputs=[a, b],
        notes={"search_config": cfg.to_dict()},
    )
    return b
