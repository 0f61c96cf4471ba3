"""In-memory triple store, pattern matching, hash joins and exact C_out."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .plan import Constant, Leaf, Node, Plan, PlanError, Query, TriplePattern, Variable

Triple = tuple[int, int, int]

# access patterns: which positions (s=0, p=1, o=2) are bound
_ACCESS = ((0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2))


class TripleStore:
    """Immutable set of integer triples with one hash index per access pattern.

    ``labels[i]`` is the label of entity id ``i``; ids are dense.
    """

    def __init__(self, triples: Iterable[Triple], labels: Sequence[str]):
        self.labels: tuple[str, ...] = tuple(labels)
        self.ids: dict[str, int] = {lab: i for i, lab in enumerate(self.labels)}
        if len(self.ids) != len(self.labels):
            raise ValueError("entity labels must be unique")
        uniq = sorted(set((int(s), int(p), int(o)) for s, p, o in triples))
        n_ent = len(self.labels)
        for t in uniq:
            if not all(0 <= x < n_ent for x in t):
                raise ValueError(f"triple {t} references an unregistered entity id")
        self.triples: tuple[Triple, ...] = tuple(uniq)
        self._index: dict[tuple[int, ...], dict[tuple[int, ...], list[Triple]]] = {}
        for positions in _ACCESS[:-1]:
            idx: dict[tuple[int, ...], list[Triple]] = {}
            for t in self.triples:
                idx.setdefault(tuple(t[i] for i in positions), []).append(t)
            self._index[positions] = idx
        self._set = frozenset(self.triples)
        self._count = [0] * n_ent
        for t in self.triples:
            for x in t:
                self._count[x] += 1

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, t) -> bool:
        return tuple(t) in self._set

    def count(self, entity: int) -> int:
        """Occurrences of ``entity`` in any position."""
        if 0 <= entity < len(self._count):
            return self._count[entity]
        return 0

    def lookup(self, bound: dict[int, int]) -> list[Triple]:
        """Triples agreeing with ``bound`` (position -> id) via the matching index."""
        if not bound:
            return list(self.triples)
        positions = tuple(sorted(bound))
        key = tuple(bound[i] for i in positions)
        if positions == (0, 1, 2):
            return [key] if key in self._set else []
        return self._index[positions].get(key, [])

    def scan(self, bound: dict[int, int]) -> list[Triple]:
        """Linear-scan counterpart of :meth:`lookup`."""
        return [t for t in self.triples if all(t[i] == v for i, v in bound.items())]

    def id_of(self, label: str) -> int:
        return self.ids[label]

    def pattern_from_labels(self, s: str, p: str, o: str) -> TriplePattern:
        """Build a pattern from label tokens; ``?name`` is a variable.

        Unknown constants get id -1 and match nothing.
        """

        def term(tok: str):
            if tok.startswith("?"):
                return Variable(tok[1:])
            return Constant(self.ids.get(tok, -1))

        return TriplePattern(term(s), term(p), term(o))

    def label_of(self, term) -> str:
        if isinstance(term, Variable):
            return "?" + term.name
        if 0 <= term.id < len(self.labels):
            return self.labels[term.id]
        return f"#{term.id}"


@dataclass
class BindingsTable:
    """A set of solution mappings over ``columns``."""

    columns: tuple[str, ...]
    rows: list[tuple[int, ...]]

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if len(set(self.columns)) != len(self.columns):
            raise ValueError(f"duplicate column names {self.columns}")
        width = len(self.columns)
        for r in self.rows:
            if len(r) != width:
                raise ValueError(f"row {r} does not match columns {self.columns}")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def cardinality(self) -> int:
        return len(self.rows)

    def as_set(self) -> frozenset:
        """Order-independent view: set of frozensets of (var, value)."""
        return frozenset(frozenset(zip(self.columns, r)) for r in self.rows)


def match_pattern(store: TripleStore, tp: TriplePattern) -> BindingsTable:
    bound: dict[int, int] = {}
    var_pos: dict[str, list[int]] = {}
    for i, term in enumerate(tp.terms()):
        if isinstance(term, Constant):
            bound[i] = term.id
        else:
            var_pos.setdefault(term.name, []).append(i)
    columns = tuple(var_pos)
    firsts = [pos[0] for pos in var_pos.values()]
    repeats = [pos for pos in var_pos.values() if len(pos) > 1]
    rows: dict[tuple[int, ...], None] = {}
    for t in store.lookup(bound):
        if repeats and not all(len({t[i] for i in pos}) == 1 for pos in repeats):
            continue
        rows[tuple(t[i] for i in firsts)] = None
    return BindingsTable(columns, list(rows))


def join(left: BindingsTable, right: BindingsTable) -> BindingsTable:
    """Hash join on the shared variables (cross product when there are none)."""
    shared = [c for c in left.columns if c in right.columns]
    extra = [c for c in right.columns if c not in left.columns]
    columns = left.columns + tuple(extra)
    li = [left.columns.index(c) for c in shared]
    ri = [right.columns.index(c) for c in shared]
    rx = [right.columns.index(c) for c in extra]

    rows: dict[tuple[int, ...], None] = {}
    if len(left.rows) <= len(right.rows):
        table: dict[tuple, list] = {}
        for lr in left.rows:
            table.setdefault(tuple(lr[i] for i in li), []).append(lr)
        for rr in right.rows:
            tail = tuple(rr[i] for i in rx)
            for lr in table.get(tuple(rr[i] for i in ri), ()):
                rows[lr + tail] = None
    else:
        table = {}
        for rr in right.rows:
            table.setdefault(tuple(rr[i] for i in ri), []).append(tuple(rr[i] for i in rx))
        for lr in left.rows:
            for tail in table.get(tuple(lr[i] for i in li), ()):
                rows[lr + tail] = None
    return BindingsTable(columns, list(rows))


def evaluate(store: TripleStore, query: Query, plan: Plan) -> tuple[BindingsTable, list[int]]:
    """Materialise a plan bottom-up.  Returns the root table and the
    cardinality of every node (index order of the plan encoding)."""
    _check_plan(query, plan)
    cards = [0] * (2 * plan.n - 1)
    ids = {id(j): plan.n + i for i, j in enumerate(plan.joins())}

    def run(node: Node) -> BindingsTable:
        if isinstance(node, Leaf):
            t = match_pattern(store, query.patterns[node.index])
            cards[node.index] = len(t)
            return t
        t = join(run(node.left), run(node.right))
        cards[ids[id(node)]] = len(t)
        return t

    return run(plan.root), cards


def _check_plan(query: Query, plan: Plan) -> None:
    if plan.n != query.n:
        raise PlanError(f"plan covers {plan.n} patterns, query has {query.n}")


class CostResult(NamedTuple):
    cost: int
    cardinalities: list[int]


class CardinalityOracle:
    """Exact cardinalities of pattern subsets of one query, cached.

    A subset splits into components of patterns linked by shared
    variables; its cardinality is the product of the component
    cardinalities, and only connected components are materialised.
    """

    def __init__(self, store: TripleStore, query: Query):
        self.store = store
        self.query = query
        self._vars = [set(tp.variables()) for tp in query.patterns]
        self._tables: dict[frozenset[int], BindingsTable] = {}
        self._cards: dict[frozenset[int], int] = {}

    def components(self, subset: frozenset[int]) -> list[frozenset[int]]:
        left = set(subset)
        comps = []
        while left:
            seed = min(left)
            comp = {seed}
            left.discard(seed)
            frontier = [seed]
            while frontier:
                v = frontier.pop()
                for u in sorted(left):
                    if self._vars[u] & self._vars[v]:
                        comp.add(u)
                        left.discard(u)
                        frontier.append(u)
            comps.append(frozenset(comp))
        return comps

    def table(self, comp: frozenset[int]) -> BindingsTable:
        """Materialised solutions of a connected subset."""
        hit = self._tables.get(comp)
        if hit is not None:
            return hit
        if len(comp) == 1:
            (i,) = comp
            t = match_pattern(self.store, self.query.patterns[i])
        else:
            # drop a pattern whose removal keeps the rest connected
            for v in sorted(comp, reverse=True):
                rest = comp - {v}
                if len(self.components(rest)) == 1:
                    break
            t = join(self.table(rest), self.table(frozenset({v})))
        self._tables[comp] = t
        return t

    def cardinality(self, subset) -> int:
        subset = frozenset(subset)
        hit = self._cards.get(subset)
        if hit is not None:
            return hit
        card = 1
        for comp in self.components(subset):
            card *= len(self.table(comp))
            if card == 0:
                break
        self._cards[subset] = card
        return card


def c_out_true(
    store: TripleStore, query: Query, plan: Plan, oracle: CardinalityOracle | None = None
) -> CostResult:
    """C_out of ``plan``: sum of the cardinalities of all join nodes.

    ``cardinalities`` holds every node's cardinality (leaves included) in
    the node order of the plan encoding; leaves do not add to the cost.
    """
    _check_plan(query, plan)
    if oracle is None:
        oracle = CardinalityOracle(store, query)
    cards = [0] * (2 * plan.n - 1)
    ids = {id(j): plan.n + i for i, j in enumerate(plan.joins())}
    total = 0

    def walk(node: Node) -> frozenset[int]:
        nonlocal total
        if isinstance(node, Leaf):
            if not 0 <= node.index < query.n:
                raise PlanError(f"pattern index {node.index} out of range")
            cards[node.index] = oracle.cardinality({node.index})
            return frozenset({node.index})
        s = walk(node.left) | walk(node.right)
        c = oracle.cardinality(s)
        cards[ids[id(node)]] = c
        total += c
        return s

    walk(plan.root)
    return CostResult(total, cards)


# -- file formats ---------------------------------------------------------------


def load_triples(path: str | Path) -> TripleStore:
    """Read a whitespace-separated ``s p o`` label file (``#`` comments)."""
    labels: dict[str, int] = {}
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tokens, got {len(toks)}")
            triples.append(tuple(labels.setdefault(t, len(labels)) for t in toks))
    return TripleStore(triples, list(labels))


def save_triples(store: TripleStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s, p, o in store.triples:
            fh.write(f"{store.labels[s]} {store.labels[p]} {store.labels[o]}\n")


def query_to_doc(query: Query, store: TripleStore) -> dict:
    return {
        "id": query.id,
        "shape": query.shape,
        "patterns": [
            {"s": store.label_of(tp.s), "p": store.label_of(tp.p), "o": store.label_of(tp.o)}
            for tp in query.patterns
        ],
    }


def query_from_doc(doc: dict, store: TripleStore) -> Query:
    pats = tuple(store.pattern_from_labels(d["s"], d["p"], d["o"]) for d in doc["patterns"])
    return Query(pats, id=str(doc["id"]), shape=doc.get("shape", "custom"))


def save_queries(queries: Sequence[Query], store: TripleStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([query_to_doc(q, store) for q in queries], fh, indent=1)
        fh.write("\n")


def load_queries(path: str | Path, store: TripleStore) -> list[Query]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = [doc]
    return [query_from_doc(d, store) for d in doc]
