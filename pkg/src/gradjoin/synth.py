"""Seeded synthetic graphs with star and path queries.

The graph is typed: every entity has a class and every predicate a
domain and a range class, so predicates constrain which patterns can
chain (as in schema-driven graphs).  Predicates, subjects and objects
are drawn from Zipf-like popularity weights, giving skewed predicate
cardinalities; each (subject, predicate) pair holds at most
``max_objects`` objects, which keeps star intermediate results bounded.
Queries are grown from an actual witness in the graph, so they are
satisfiable by construction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .plan import Constant, Query, TriplePattern, Variable
from .storage import TripleStore


class GenerationError(RuntimeError):
    pass


@dataclass
class GenConfig:
    n_entities: int = 1000
    n_predicates: int = 96
    n_classes: int = 8
    n_triples: int = 6000
    max_objects: int = 3
    subject_skew: float = 0.9
    predicate_skew: float = 1.0
    object_skew: float = 0.6
    shapes: tuple[str, ...] = ("star", "path")
    sizes: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    queries_per_size: int = 50
    star_constant_prob: float = 0.3
    path_constant_prob: float = 0.0
    max_retries: int = 200
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shapes"] = list(self.shapes)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        for key in ("shapes", "sizes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _zipf(k: int, skew: float) -> np.ndarray:
    w = 1.0 / np.arange(1, k + 1) ** skew
    return w / w.sum()


def generate_store(cfg: GenConfig, rng: np.random.Generator) -> TripleStore:
    P, E, C = cfg.n_predicates, cfg.n_entities, cfg.n_classes
    if C < 1 or E < C:
        raise ValueError("need at least one class and one entity per class")
    labels = [f"p{i}" for i in range(P)] + [f"e{i}" for i in range(E)]
    # entity ids are P..P+E-1; popularity order is shuffled so ids carry no rank
    ent = rng.permutation(E) + P
    members = [ent[c::C] for c in range(C)]
    cs = [np.cumsum(_zipf(len(m), cfg.subject_skew)) for m in members]
    co = [np.cumsum(_zipf(len(m), cfg.object_skew)) for m in members]
    pp = _zipf(P, cfg.predicate_skew)
    pred = rng.permutation(P)
    domain = rng.integers(C, size=P)
    range_ = rng.integers(C, size=P)
    fanout: dict[tuple[int, int], set[int]] = {}
    triples: set[tuple[int, int, int]] = set()
    attempts = 0
    while len(triples) < cfg.n_triples:
        attempts += 1
        if attempts > 50 * cfg.n_triples:
            raise GenerationError("could not place the requested number of triples")
        batch = 1024
        pp_ = pred[rng.choice(P, batch, p=pp)]
        u = rng.random((batch, 2))
        ss, oo = [], []
        for p, (us, uo) in zip(pp_.tolist(), u):
            d, r = domain[p], range_[p]
            ss.append(int(members[d][min(np.searchsorted(cs[d], us), len(members[d]) - 1)]))
            oo.append(int(members[r][min(np.searchsorted(co[r], uo), len(members[r]) - 1)]))
        for s, p, o in zip(ss, pp_.tolist(), oo):
            if s == o:
                continue
            objs = fanout.setdefault((s, p), set())
            if o in objs or len(objs) >= cfg.max_objects:
                continue
            objs.add(o)
            triples.add((s, p, o))
            if len(triples) >= cfg.n_triples:
                break
    return TripleStore(triples, labels)


class _Graph:
    def __init__(self, store: TripleStore):
        self.out: dict[int, list[tuple[int, int]]] = {}
        for s, p, o in store.triples:
            self.out.setdefault(s, []).append((p, o))
        self.subjects = sorted(self.out)
        self.preds_of = {s: sorted({p for p, _ in po}) for s, po in self.out.items()}


def _star(g: _Graph, n: int, const_prob: float, rng: np.random.Generator) -> tuple[TriplePattern, ...] | None:
    centers = [s for s in g.subjects if len(g.preds_of[s]) >= n]
    if not centers:
        return None
    s = centers[rng.integers(len(centers))]
    preds = rng.choice(g.preds_of[s], n, replace=False)
    pats = []
    for i, p in enumerate(preds.tolist()):
        objs = sorted(o for q, o in g.out[s] if q == p)
        o = objs[rng.integers(len(objs))]
        obj = Constant(o) if rng.random() < const_prob else Variable(f"v{i + 1}")
        pats.append(TriplePattern(Variable("v0"), Constant(p), obj))
    return tuple(pats)


def _path(g: _Graph, n: int, const_prob: float, rng: np.random.Generator) -> tuple[TriplePattern, ...] | None:
    node = g.subjects[rng.integers(len(g.subjects))]
    walk = []
    for _ in range(n):
        nxt = g.out.get(node)
        if not nxt:
            return None
        p, o = nxt[rng.integers(len(nxt))]
        walk.append((node, p, o))
        node = o

    def term(i: int, ent: int):
        if (i == 0 or i == n) and rng.random() < const_prob:
            return Constant(ent)
        return Variable(f"v{i}")

    return tuple(
        TriplePattern(term(i, s), Constant(p), term(i + 1, o)) for i, (s, p, o) in enumerate(walk)
    )


def generate_queries(store: TripleStore, cfg: GenConfig, rng: np.random.Generator) -> list[Query]:
    g = _Graph(store)
    makers = {"star": (_star, cfg.star_constant_prob), "path": (_path, cfg.path_constant_prob)}
    queries = []
    for shape in cfg.shapes:
        if shape not in makers:
            raise ValueError(f"unknown query shape {shape!r}")
        make, cp = makers[shape]
        for n in cfg.sizes:
            seen: set[tuple[TriplePattern, ...]] = set()
            made = 0
            tries = 0
            while made < cfg.queries_per_size:
                pats = make(g, n, cp, rng)
                tries += 1
                if pats is not None and pats not in seen:
                    seen.add(pats)
                    queries.append(Query(pats, id=f"{shape}-{n}-{made}", shape=shape))
                    made += 1
                    tries = 0
                elif tries > cfg.max_retries:
                    raise GenerationError(
                        f"cannot generate {shape} queries of size {n} "
                        f"({made}/{cfg.queries_per_size} after {cfg.max_retries} retries)"
                    )
    return queries


def generate_synthetic(cfg: GenConfig) -> tuple[TripleStore, list[Query]]:
    rng = np.random.default_rng(cfg.seed)
    store = generate_store(cfg, rng)
    return store, generate_queries(store, cfg, rng)
