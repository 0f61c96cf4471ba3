"""Seeded random search over search hyperparameters on a tuning query set.

Queries are drawn with their own seed, so they never coincide with the
evaluation queries of ``gradjoin optimize`` (which uses the run seed and a
different id prefix).  Each trial runs 8 nested fronts per query and scores
the k=5 median cost relative to greedy at each size, plus how often the
8-front search at n=4 lands within 5% of the exhaustive optimum.
"""

import argparse
import json
import sys
import time
from dataclasses import replace

import numpy as np

from gradjoin import costmodel, discrete, relax
from gradjoin import workbench as W


def sample_config(rng: np.random.Generator) -> dict:
    def log_uniform(lo, hi):
        return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))

    return {
        "lr": log_uniform(0.2, 2.5),
        "tau0": float(rng.uniform(2, 20)),
        "q": float(rng.uniform(4, 8)),
        "lambda_max": log_uniform(0.3, 5),
        "gamma": log_uniform(0.3, 10),
        "weight_decay": float(rng.choice([0.0, 0.01, 0.05])),
        "objective": str(rng.choice(["raw", "cost"])),
        "weights": {k: log_uniform(100, 5000) for k in relax.PENALTY_NAMES},
    }


def score(cases, cfg: relax.SearchConfig, sizes) -> dict:
    ratio = {n: [] for n in sizes}
    hits = []
    for q, params, x, greedy_cost, best in cases:
        costs = [t.plan_cost for t in relax.optimize_multi(q, params, x, replace(cfg, k=8)).traces]
        ratio[q.n].append(min(costs[:5]) / greedy_cost)
        if best is not None:
            hits.append(min(costs) <= 1.05 * best)
    out = {f"ratio_n{n}": float(np.median(v)) for n, v in ratio.items()}
    out["hit_n4"] = float(np.mean(hits)) if hits else float("nan")
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="runs/data/manifest.json")
    ap.add_argument("--model", default="runs/model/model.json")
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--query-seed", type=int, default=7)
    ap.add_argument("--per-size", type=int, default=3, help="queries per shape and size")
    ap.add_argument("--sizes", default="4,6,8")
    ap.add_argument("--baseline", action="append", default=[], help="JSON overrides tried before random trials")
    ap.add_argument("--out", default="runs/tune.jsonl")
    args = ap.parse_args(argv)

    sizes = tuple(int(s) for s in args.sizes.split(","))
    ds = W.load_dataset(args.data)
    models = costmodel.load_models(args.model)
    cases = []
    for q in W.fresh_queries(ds, ("star", "path"), sizes, args.per_size, args.query_seed, "tune"):
        p = models.for_shape(q.shape)
        x = costmodel.build_features(q, p.d_e, ds.store)
        cost = discrete.LearnedCost(p, x, q.n)
        best = discrete.exhaustive(q, cost).cost if q.n == 4 else None
        cases.append((q, p, x, discrete.greedy(q, cost).cost, best))

    rng = np.random.default_rng(args.seed)
    trials = [json.loads(b) for b in args.baseline]
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in range(args.trials):
            overrides = trials[i] if i < len(trials) else sample_config(rng)
            cfg = relax.SearchConfig.from_dict({**overrides, "seed": 11})
            started = time.perf_counter()
            result = {**score(cases, cfg, sizes), "seconds": time.perf_counter() - started, "config": overrides}
            fh.write(json.dumps(result, sort_keys=True) + "\n")
            fh.flush()
            print(json.dumps({k: v for k, v in result.items() if k != "config"}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
