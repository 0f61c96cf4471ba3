"""Discrete left-linear join-order baselines: exhaustive, subset DP, greedy.

All three take a :class:`CostFunction` that prices a plan over any subset
of the query's patterns (a prefix is priced as a complete plan over its
own patterns).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import costmodel
from .plan import Leaf, Plan, Query, encode, enumerate_left_linear, is_left_linear
from .storage import CardinalityOracle, TripleStore, c_out_true


class BudgetError(RuntimeError):
    pass


class CostFunction:
    """Plan -> nonnegative cost, counting every evaluation.

    ``cost(order)`` prices the left-linear plan joining query patterns in
    ``order``; ``__call__`` prices a full :class:`Plan`.
    """

    kind = "abstract"

    def __init__(self):
        self.evaluations = 0

    def reset(self) -> None:
        self.evaluations = 0

    def __call__(self, plan: Plan) -> float:
        return self.cost(plan.leaf_order(), plan)

    def cost(self, order: Sequence[int], plan: Plan | None = None) -> float:
        self.evaluations += 1
        return self._cost(tuple(order), plan)

    def _cost(self, order: tuple[int, ...], plan: Plan | None) -> float:
        raise NotImplementedError


class ExactCost(CostFunction):
    """True C_out from the store."""

    kind = "exact"

    def __init__(self, store: TripleStore, query: Query):
        super().__init__()
        self.store = store
        self.query = query
        self.oracle = CardinalityOracle(store, query)

    def _cost(self, order, plan):
        if plan is not None and sorted(order) == list(range(self.query.n)):
            return float(c_out_true(self.store, self.query, plan, self.oracle).cost)
        total = 0
        for m in range(2, len(order) + 1):
            total += self.oracle.cardinality(order[:m])
        return float(total)


class LearnedCost(CostFunction):
    """Predicted cost (cost units) of the trained model on the plan graph."""

    kind = "learned"

    def __init__(self, params: costmodel.ModelParams, x_query: np.ndarray, n: int):
        super().__init__()
        self.params = params
        self.x_query = x_query
        self.n = n

    def _cost(self, order, plan):
        if plan is not None and not is_left_linear(plan):
            return costmodel.predict_cost(self.params, self.x_query, encode(plan))
        X = costmodel.plan_features(self.x_query, self.n, order)
        return costmodel.predict_cost(self.params, X, encode(Plan.left_linear(range(len(order)))))


@dataclass
class SearchResult:
    plan: Plan
    cost: float
    evaluations: int
    note: str = ""


def exhaustive(query: Query, cost: CostFunction, max_n: int = 8) -> SearchResult:
    n = query.n
    if n > max_n:
        raise BudgetError(f"exhaustive search capped at n={max_n}, got n={n}")
    start = cost.evaluations
    best: tuple[float, Plan] | None = None
    for plan in enumerate_left_linear(n):
        c = cost(plan)
        if best is None or c < best[0]:
            best = (c, plan)
    assert best is not None
    return SearchResult(best[1], best[0], cost.evaluations - start)


def dp_left_linear(query: Query, cost: CostFunction, max_n: int = 20) -> SearchResult:
    """Best left-linear prefix per pattern subset, grown one pattern at a time.

    Exact for costs that add up over prefixes (like C_out); best-effort
    for learned models.
    """
    n = query.n
    if n > max_n:
        raise BudgetError(f"dynamic programming capped at n={max_n}, got n={n}")
    start = cost.evaluations
    if n == 1:
        plan = Plan(Leaf(0), 1)
        return SearchResult(plan, cost(plan), cost.evaluations - start)

    best: dict[frozenset[int], tuple[float, tuple[int, ...]]] = {}
    for i, j in itertools.combinations(range(n), 2):
        best[frozenset((i, j))] = (cost.cost((i, j)), (i, j))
    for m in range(3, n + 1):
        for subset in itertools.combinations(range(n), m):
            key = frozenset(subset)
            cand: tuple[float, tuple[int, ...]] | None = None
            for t in subset:
                prefix = best[key - {t}][1]
                order = prefix + (t,)
                c = cost.cost(order)
                if cand is None or c < cand[0]:
                    cand = (c, order)
            best[key] = cand
    c, order = best[frozenset(range(n))]
    note = "" if cost.kind == "exact" else "learned cost: optimality not guaranteed"
    return SearchResult(Plan.left_linear(order), c, cost.evaluations - start, note)


def greedy_evaluations(n: int) -> int:
    return n * (n - 1) + sum(n - m for m in range(2, n))


def greedy(query: Query, cost: CostFunction) -> SearchResult:
    """Cheapest ordered pair first, then append the locally cheapest pattern."""
    n = query.n
    if n < 2:
        raise ValueError("greedy search needs at least two patterns")
    start = cost.evaluations
    best: tuple[float, tuple[int, ...]] | None = None
    for i, j in itertools.permutations(range(n), 2):
        c = cost.cost((i, j))
        if best is None or c < best[0]:
            best = (c, (i, j))
    c, order = best
    while len(order) < n:
        step: tuple[float, tuple[int, ...]] | None = None
        for t in range(n):
            if t in order:
                continue
            cand = order + (t,)
            ct = cost.cost(cand)
            if step is None or ct < step[0]:
                step = (ct, cand)
        c, order = step
    return SearchResult(Plan.left_linear(order), c, cost.evaluations - start)
