"""Join plans, their adjacency-matrix encoding and plan-space utilities.

Node numbering is 0-based inside the package: patterns ``0..n-1``, joins
``n..2n-2``, root ``2n-2``.  ``A[i, j] == 1`` means node ``i`` is joined
into node ``j``.  Plan files use 1-based node numbers.

Joins are numbered in post-order (children before parents), so in a
left-linear plan the deepest join is node ``n`` and indices grow toward
the root.

Operand order inside a join is kept on :class:`Join`, but the matrix
cannot express it; :meth:`Plan.canonical` picks one representative per
matrix and that is what :func:`decode` and :func:`project_discrete` return.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np


@dataclass(frozen=True)
class Constant:
    id: int

    def __str__(self) -> str:
        return f"#{self.id}"


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


Term = Union[Constant, Variable]


@dataclass(frozen=True)
class TriplePattern:
    s: Term
    p: Term
    o: Term

    def terms(self) -> tuple[Term, Term, Term]:
        return (self.s, self.p, self.o)

    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.terms():
            if isinstance(t, Variable):
                seen.setdefault(t.name)
        return tuple(seen)


@dataclass(frozen=True)
class Query:
    patterns: tuple[TriplePattern, ...]
    id: str = "q"
    shape: str = "custom"

    def __post_init__(self):
        if len(self.patterns) < 1:
            raise ValueError("a query needs at least one triple pattern")
        object.__setattr__(self, "patterns", tuple(self.patterns))

    @property
    def n(self) -> int:
        return len(self.patterns)

    def subquery(self, indices) -> "Query":
        return Query(tuple(self.patterns[i] for i in indices), id=self.id, shape=self.shape)


# -- plan trees -----------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    index: int


@dataclass(frozen=True)
class Join:
    left: "Node"
    right: "Node"


Node = Union[Leaf, Join]


def _leaves(node: Node) -> list[int]:
    if isinstance(node, Leaf):
        return [node.index]
    return _leaves(node.left) + _leaves(node.right)


def _canonical(node: Node) -> Node:
    if isinstance(node, Leaf):
        return node
    a, b = _canonical(node.left), _canonical(node.right)
    if isinstance(a, Leaf) and isinstance(b, Join):
        a, b = b, a
    elif isinstance(a, Leaf) and isinstance(b, Leaf):
        if b.index < a.index:
            a, b = b, a
    elif isinstance(a, Join) and isinstance(b, Join):
        if min(_leaves(b)) < min(_leaves(a)):
            a, b = b, a
    return Join(a, b)


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    """A binary join tree over patterns ``0..n-1``."""

    root: Node
    n: int

    def __post_init__(self):
        got = sorted(_leaves(self.root))
        if got != list(range(self.n)):
            raise PlanError(f"plan leaves {got} are not a permutation of 0..{self.n - 1}")

    @classmethod
    def left_linear(cls, order) -> "Plan":
        order = list(order)
        node: Node = Leaf(order[0])
        for i in order[1:]:
            node = Join(node, Leaf(i))
        return cls(node, len(order))

    def leaf_order(self) -> list[int]:
        return _leaves(self.root)

    def canonical(self) -> "Plan":
        return Plan(_canonical(self.root), self.n)

    def same_as(self, other: "Plan") -> bool:
        return self.n == other.n and self.canonical() == other.canonical()

    def joins(self) -> list[Join]:
        """Join nodes in post-order; position ``i`` is node ``n + i``."""
        out: list[Join] = []

        def walk(node: Node) -> None:
            if isinstance(node, Join):
                walk(node.left)
                walk(node.right)
                out.append(node)

        walk(self.root)
        return out

    def __str__(self) -> str:
        def fmt(node: Node) -> str:
            if isinstance(node, Leaf):
                return f"t{node.index + 1}"
            return f"({fmt(node.left)}⋈{fmt(node.right)})"

        return fmt(self.root)


def matrix_size(n: int) -> int:
    return 2 * n - 1


def n_from_size(size: int) -> int:
    if size < 1 or size % 2 == 0:
        raise PlanError(f"plan matrices have odd dimension 2n-1, got {size}")
    return (size + 1) // 2


def node_ids(plan: Plan) -> dict[int, int]:
    """Map ``id(join)`` to its node index under the post-order numbering."""
    return {id(j): plan.n + i for i, j in enumerate(plan.joins())}


def edges(plan: Plan) -> list[tuple[int, int]]:
    """``(child, parent)`` pairs, 0-based."""
    ids = node_ids(plan)

    def idx(node: Node) -> int:
        return node.index if isinstance(node, Leaf) else ids[id(node)]

    out = []
    for j in plan.joins():
        out.append((idx(j.left), ids[id(j)]))
        out.append((idx(j.right), ids[id(j)]))
    return out


def encode(plan: Plan) -> np.ndarray:
    size = matrix_size(plan.n)
    a = np.zeros((size, size))
    for i, j in edges(plan):
        a[i, j] = 1.0
    return a


@dataclass(frozen=True)
class Violation:
    kind: str
    nodes: tuple[int, ...]
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind} at nodes {list(self.nodes)}" + (f": {self.detail}" if self.detail else "")


class InvalidPlanMatrix(PlanError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def validate(matrix) -> list[Violation]:
    """Every structural problem of a candidate plan matrix (empty if valid)."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return [Violation("shape", (), f"expected a square matrix, got {a.shape}")]
    size = a.shape[0]
    if size % 2 == 0:
        return [Violation("shape", (), f"dimension {size} is not of the form 2n-1")]
    n = n_from_size(size)
    root = size - 1
    out: list[Violation] = []
    if n == 1:
        if a[0, 0] != 0.0:
            out.append(Violation("self-loop", (0,), "a single pattern has no edges"))
        return out

    bad = np.argwhere((a != 0.0) & (a != 1.0))
    if len(bad):
        out.append(Violation("non-binary", tuple(sorted({int(x) for x in bad.ravel()})),
                             f"entries {[tuple(map(int, b)) for b in bad]}"))
    e = a == 1.0
    diag = [int(i) for i in np.flatnonzero(np.diag(e))]
    if diag:
        out.append(Violation("self-loop", tuple(diag)))

    indeg = e.sum(axis=0)
    outdeg = e.sum(axis=1)
    pat_in = [v for v in range(n) if indeg[v] > 0]
    if pat_in:
        out.append(Violation("pattern-in-edge", tuple(pat_in), "patterns accept no in-edges"))
    pat_out = [v for v in range(n) if outdeg[v] != 1]
    if pat_out:
        out.append(Violation("pattern-out-degree", tuple(pat_out), "each pattern needs one out-edge"))
    join_in = [v for v in range(n, size) if indeg[v] != 2]
    if join_in:
        out.append(Violation("join-in-degree", tuple(join_in), "each join needs two in-edges"))
    join_out = [v for v in range(n, root) if outdeg[v] != 1]
    if join_out:
        out.append(Violation("join-out-degree", tuple(join_out), "each non-root join needs one out-edge"))
    if outdeg[root] != 0:
        out.append(Violation("root-out-degree", (root,), "the root has no out-edge"))

    # cycles: strongly connected components with more than one node
    cyc = _cyclic_nodes(e)
    if cyc:
        out.append(Violation("cycle", tuple(cyc)))

    reach = np.zeros(size, dtype=bool)
    reach[root] = True
    frontier = [root]
    while frontier:
        v = frontier.pop()
        for u in np.flatnonzero(e[:, v]):
            if not reach[u]:
                reach[u] = True
                frontier.append(int(u))
    loose = [int(v) for v in np.flatnonzero(~reach)]
    if loose:
        out.append(Violation("disconnected", tuple(loose), "not connected to the root"))
    return out


def _cyclic_nodes(e: np.ndarray) -> list[int]:
    size = e.shape[0]
    # transitive closure; small matrices only
    r = e.copy()
    for k in range(size):
        r = r | (r[:, [k]] & r[[k], :])
    return [int(v) for v in range(size) if r[v, v] and not e[v, v]]


def decode(matrix) -> Plan:
    """Inverse of :func:`encode`, returning the canonical plan.

    Raises :class:`InvalidPlanMatrix` listing every violation found.
    """
    violations = validate(matrix)
    if violations:
        raise InvalidPlanMatrix(violations)
    a = np.asarray(matrix) == 1.0
    size = a.shape[0]
    n = n_from_size(size)
    if n == 1:
        return Plan(Leaf(0), 1)

    def build(v: int) -> Node:
        if v < n:
            return Leaf(v)
        kids = [int(u) for u in np.flatnonzero(a[:, v])]
        return Join(build(kids[0]), build(kids[1]))

    return Plan(build(size - 1), n).canonical()


def is_left_linear(plan: Plan) -> bool:
    return all(not (isinstance(j.left, Join) and isinstance(j.right, Join)) for j in plan.joins())


def enumerate_left_linear(n: int) -> Iterator[Plan]:
    """All ``n!`` left-linear plans, one per leaf permutation, lazily."""
    if n < 1:
        raise ValueError("n must be positive")
    for perm in itertools.permutations(range(n)):
        yield Plan.left_linear(perm)


def count_plans(n: int, shape: str = "left_linear") -> int:
    if n < 1:
        raise ValueError("n must be positive")
    if shape == "left_linear":
        return math.factorial(n)
    if shape == "bushy":
        m = n - 1
        return math.comb(2 * m, m) // (m + 1) * math.factorial(n)
    raise ValueError(f"unknown plan shape {shape!r}")


def project_discrete(soft) -> Plan:
    """Best-first extraction of a left-linear plan from a soft adjacency.

    Starting at the root, repeatedly attach the free join and the free
    pattern with the largest combined weight into the current join, then
    descend into that join.  The deepest join takes the last two patterns.
    Ties go to the lowest index.
    """
    a = np.asarray(soft, dtype=np.float64)
    n = n_from_size(a.shape[0])
    if n < 2:
        raise PlanError("projection needs at least two patterns")
    c = 2 * n - 2
    t_free = list(range(n))
    j_free = list(range(n, 2 * n - 2))
    attached: list[int] = []
    while j_free:
        j = max(j_free, key=lambda v: (a[v, c], -v))
        k = max(t_free, key=lambda v: (a[v, c], -v))
        attached.append(k)
        j_free.remove(j)
        t_free.remove(k)
        c = j
    order = sorted(t_free) + attached[::-1]
    return Plan.left_linear(order).canonical()


def interpolate(p1, p2, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    a, b = np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"cannot interpolate {a.shape} and {b.shape}")
    return (1.0 - alpha) * a + alpha * b


# -- file formats ---------------------------------------------------------------


def plan_to_doc(plan: Plan, query_id: str) -> dict:
    return {
        "query_id": query_id,
        "n": plan.n,
        "edges": [[i + 1, j + 1] for i, j in edges(plan)],
    }


def plan_from_doc(doc: dict) -> Plan:
    n = int(doc["n"])
    size = matrix_size(n)
    a = np.zeros((size, size))
    for i, j in doc["edges"]:
        if not (1 <= i <= size and 1 <= j <= size):
            raise PlanError(f"edge ({i}, {j}) outside 1..{size}")
        a[i - 1, j - 1] = 1.0
    return decode(a)


def format_matrix(a) -> str:
    return "\n".join(" ".join(repr(float(x)) for x in row) for row in np.asarray(a)) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    rows = [[float(x) for x in line.split()] for line in text.splitlines() if line.strip()]
    return np.array(rows, dtype=np.float64)
