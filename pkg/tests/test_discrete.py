import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradjoin import costmodel, discrete as D
from gradjoin.plan import Plan, Query, TriplePattern, Variable
from oracles import greedy_count


class TableCost(D.CostFunction):
    """Cost of a prefix read from random per-subset weights; additive over prefixes like C_out."""

    kind = "exact"

    def __init__(self, n, seed):
        super().__init__()
        self.rng = np.random.default_rng(seed)
        self.w: dict = {}

    def card(self, s):
        key = frozenset(s)
        if key not in self.w:
            self.w[key] = float(self.rng.integers(0, 50))
        return self.w[key]

    def _cost(self, order, plan):
        return sum(self.card(order[:m]) for m in range(2, len(order) + 1))


def _query(n):
    return Query(tuple(TriplePattern(Variable(f"s{i}"), Variable(f"p{i}"), Variable(f"o{i}")) for i in range(n)))


@pytest.mark.parametrize("n", range(2, 8))
def test_evaluation_counts(n):
    q = _query(n)
    cost = TableCost(n, 0)
    assert D.exhaustive(q, cost).evaluations == math.factorial(n)
    assert D.greedy(q, cost).evaluations == D.greedy_evaluations(n) == greedy_count(n)


def test_greedy_count_closed_form():
    for n in range(2, 30):
        assert D.greedy_evaluations(n) == n * (n - 1) + (n - 2) * (n - 1) // 2


@settings(max_examples=40)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_dp_matches_exhaustive_on_additive_costs(n, seed):
    q = _query(n)
    cost = TableCost(n, seed)
    ex = D.exhaustive(q, cost)
    dp = D.dp_left_linear(q, cost)
    g = D.greedy(q, cost)
    assert dp.cost == ex.cost
    assert cost(dp.plan) == dp.cost
    assert g.cost >= ex.cost


def test_exact_cost_on_synthetic(small_synthetic):
    store, queries = small_synthetic
    for q in [q for q in queries if 3 <= q.n <= 5]:
        cost = D.ExactCost(store, q)
        ex = D.exhaustive(q, cost)
        dp = D.dp_left_linear(q, cost)
        g = D.greedy(q, cost)
        assert dp.cost == ex.cost
        assert g.cost >= ex.cost
        # prefix pricing agrees with full-plan pricing
        assert cost.cost(ex.plan.leaf_order()) == ex.cost


def test_budgets():
    q = _query(9)
    with pytest.raises(D.BudgetError):
        D.exhaustive(q, TableCost(9, 0))
    with pytest.raises(D.BudgetError):
        D.dp_left_linear(q, TableCost(9, 0), max_n=8)
    with pytest.raises(ValueError):
        D.greedy(_query(1), TableCost(1, 0))
    assert D.dp_left_linear(_query(1), TableCost(1, 0)).plan.n == 1


def test_learned_cost_prices_prefixes_as_subplans(small_synthetic, random_model):
    store, queries = small_synthetic
    q = next(q for q in queries if q.n == 4)
    x = costmodel.build_features(q, random_model.d_e, store)
    lc = D.LearnedCost(random_model, x, q.n)
    full = Plan.left_linear([2, 0, 3, 1])
    assert lc(full) == pytest.approx(costmodel.predict_plan(random_model, x, q.n, full))
    assert lc.cost([2, 0, 3, 1]) == pytest.approx(lc(full))
    sub = lc.cost([2, 0])
    assert sub == pytest.approx(costmodel.predict_plan(random_model, x, q.n, Plan.left_linear([0, 1]), subset=[2, 0]))
    dp = D.dp_left_linear(q, lc)
    assert dp.note
    ex = D.exhaustive(q, lc)
    assert ex.cost <= dp.cost + 1e-12
