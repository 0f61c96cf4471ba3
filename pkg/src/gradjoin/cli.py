"""``gradjoin`` command line.

Settings resolve in order: spec defaults, then the section of ``--config``
named after the command (or the whole file if it has no such section),
then command flags and the global ``--seed``, ``--out`` and ``--profile``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from . import workbench as W

COMMANDS = {
    "gen-data": (W.GenDataSpec, W.cmd_gen_data),
    "train": (W.TrainSpec, W.cmd_train),
    "optimize": (W.OptimizeSpec, W.cmd_optimize),
    "landscape": (W.LandscapeSpec, W.cmd_landscape),
    "bench-runtime": (W.BenchSpec, W.cmd_bench_runtime),
    "front-sweep": (W.FrontSweepSpec, W.cmd_front_sweep),
}


def _ints(text: str) -> tuple[int, ...]:
    """``4,6,8`` or a range ``3-14``."""
    out: list[int] = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _words(text: str) -> tuple[str, ...]:
    return tuple(w for w in text.split(",") if w)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file")
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--profile", default=d, help="search hyperparameter profile")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradjoin", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("gen-data", "generate a store, queries and labelled plans")
    p.add_argument("--queries-per-size", type=int, dest="queries_per_size")
    p.add_argument("--plans-per-query", type=int, dest="plans_per_query")
    p.add_argument("--sizes", type=_ints)
    p.add_argument("--shapes", type=_words)

    p = add("train", "train the cost model on a generated dataset")
    p.add_argument("--data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--split-by", choices=("plan", "query"), dest="split_by")

    for name, help_ in (
        ("optimize", "compare search methods under one model"),
        ("landscape", "cost and penalty between two plans"),
        ("bench-runtime", "search wall-clock against query size"),
        ("front-sweep", "best cost against the number of search fronts"),
    ):
        p = add(name, help_)
        p.add_argument("--data")
        p.add_argument("--model")
        p.add_argument("--sizes", type=_ints)
        if name in ("optimize", "front-sweep"):
            p.add_argument("--queries-per-size", type=int, dest="queries_per_size")
            p.add_argument("--workers", type=int)
        if name == "optimize":
            p.add_argument("--methods", type=_words)
        if name == "landscape":
            p.add_argument("--query")
            p.add_argument("--plan1")
            p.add_argument("--plan2")
            p.add_argument("--pairs", type=int)
            p.add_argument("--points", type=int)
        if name == "bench-runtime":
            p.add_argument("--repetitions", type=int)
            p.add_argument("--dp-max-n", type=int, dest="dp_max_n")
        if name == "front-sweep":
            p.add_argument("--ks", type=_ints)
    return parser


def resolve_spec(args: argparse.Namespace):
    cls, _ = COMMANDS[args.command]
    doc: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            full = json.load(fh)
        doc = dict(full.get(args.command, full if not set(full) & set(COMMANDS) else {}))
    flags = {k: v for k, v in vars(args).items() if v is not None}
    for key in ("seed", "out", "profile", "data", "model", "query", "plan1", "plan2"):
        if key in flags and key in cls.__dataclass_fields__:
            doc[key] = flags[key]
    for key in ("sizes", "shapes", "ks", "methods", "queries_per_size", "plans_per_query", "pairs", "points",
                "repetitions", "dp_max_n", "workers"):
        if key not in flags:
            continue
        if args.command == "gen-data" and key in ("sizes", "shapes", "queries_per_size"):
            doc.setdefault("generator", {})[key] = list(flags[key]) if isinstance(flags[key], tuple) else flags[key]
        elif key in cls.__dataclass_fields__:
            doc[key] = flags[key]
    if args.command == "train":
        for key in ("epochs", "split_by"):
            if key in flags:
                doc.setdefault("train", {})[key] = flags[key]
    return W.spec_from_dict(cls, doc)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = resolve_spec(args)
        _, run = COMMANDS[args.command]
        result = run(spec)
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        print(f"gradjoin {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, tuple):
        result = result[0]
    print(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
