"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import math

import numpy as np

from gradjoin.plan import Constant, Leaf, Query, TriplePattern


def scan_matches(triples, tp: TriplePattern) -> set[frozenset]:
    """Solution mappings of one pattern by a full scan."""
    out = set()
    for t in triples:
        mu: dict[str, int] = {}
        ok = True
        for term, value in zip(tp.terms(), t):
            if isinstance(term, Constant):
                ok = term.id == value
            elif term.name in mu:
                ok = mu[term.name] == value
            else:
                mu[term.name] = value
            if not ok:
                break
        if ok:
            out.add(frozenset(mu.items()))
    return out


def nested_loop_join(left: set[frozenset], right: set[frozenset]) -> set[frozenset]:
    out = set()
    for a in left:
        da = dict(a)
        for b in right:
            if all(da.get(k, v) == v for k, v in b):
                out.add(a | b)
    return out


def evaluate_subset(triples, query: Query, subset) -> set[frozenset]:
    result = {frozenset()}
    for i in subset:
        result = nested_loop_join(result, scan_matches(triples, query.patterns[i]))
    return result


def c_out(triples, query: Query, plan) -> int:
    """Sum of join cardinalities, every join evaluated from scratch."""
    total = 0

    def walk(node):
        nonlocal total
        if isinstance(node, Leaf):
            return [node.index]
        leaves = walk(node.left) + walk(node.right)
        total += len(evaluate_subset(triples, query, leaves))
        return leaves

    walk(plan.root)
    return total


def expm_series(a: np.ndarray, terms: int = 30) -> np.ndarray:
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def penalties(A: np.ndarray, n: int) -> dict[str, float]:
    """The five structural penalties written as explicit loops."""
    N = 2 * n - 1
    root = N - 1
    d_out = [sum(A[v, j] for j in range(N)) for v in range(N)]
    d_in = [sum(A[i, v] for i in range(N)) for v in range(N)]
    p_to = sum((d_out[v] - 1) ** 2 for v in range(n))
    p_ji = sum((d_in[v] - 2) ** 2 for v in range(n, N))
    p_jo = d_out[root] ** 2 + sum((d_out[v] - 1) ** 2 for v in range(n, root))
    p_ll = 0.0
    for v in range(n, N):
        c_tp = sum(A[i, v] for i in range(n))
        c_jn = sum(A[i, v] for i in range(n, N))
        if v == n:
            p_ll += (c_tp - 2) ** 2 + c_jn**2
        else:
            p_ll += (c_tp - 1) ** 2 + (c_jn - 1) ** 2
    p_acyc = float(np.trace(expm_series(A, 60))) - N
    return {"to": p_to, "ji": p_ji, "jo": p_jo, "ll": p_ll, "acyc": p_acyc}


def greedy_count(n: int) -> int:
    return n * (n - 1) + sum(n - m for m in range(2, n))


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)
