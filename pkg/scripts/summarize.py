"""Print the headline numbers of a finished desk run as plain tables."""

import argparse
import sys
from pathlib import Path

import numpy as np

from gradjoin.workbench import read_csv


def optimize_table(root: Path) -> None:
    rows = read_csv(root / "optimize" / "results.csv")
    methods = sorted({r["method"] for r in rows})
    sizes = sorted({int(r["n"]) for r in rows})
    print("median predicted cost (ratio to greedy)")
    print("n    " + "".join(f"{m:>20}" for m in methods))
    for n in sizes:
        med = {}
        for m in methods:
            vals = [float(r["predicted_cost"]) for r in rows if int(r["n"]) == n and r["method"] == m and not r["error"]]
            med[m] = float(np.median(vals)) if vals else float("nan")
        g = med.get("greedy", float("nan"))
        print(f"{n:<5}" + "".join(f"{med[m]:>12.1f} ({med[m] / g:4.2f})" for m in methods))


def sweep_table(root: Path) -> None:
    print("\nfront sweep")
    for r in read_csv(root / "front_sweep" / "sweep_summary.csv"):
        print(f"k={r['k']:<3} median {float(r['median_predicted_cost']):>12.1f}  share of gain {float(r['improvement_fraction']):.0%}")


def bench_table(root: Path) -> None:
    print("\nruntime fits")
    for r in read_csv(root / "bench" / "bench_timing_fit.csv"):
        if not r["statistic"].startswith("ratio_"):
            print(f"{r['method']:<8}{r['statistic']:<22}{float(r['value']):.3f}")


def landscape_table(root: Path) -> None:
    pairs = read_csv(root / "landscape" / "pairs.csv")
    toward = sum(r["toward_cheaper"] == "1" for r in pairs)
    print(f"\nlandscape: midpoint slope points to the cheaper plan in {toward}/{len(pairs)} pairs")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("root", type=Path, nargs="?", default=Path("runs"))
    args = ap.parse_args(argv)
    summary = read_csv(args.root / "model" / "train_summary.csv")
    for r in summary:
        print(f"cost model [{r['shape']}] validation median q-error {float(r['best_val_median_q']):.3f}")
    print()
    for part in (optimize_table, sweep_table, landscape_table, bench_table):
        try:
            part(args.root)
        except FileNotFoundError as exc:
            print(f"(skipped: {exc.filename} missing)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
