"""Dense 2-D tensors with a reverse-mode tape.

Every tensor is a ``(rows, cols)`` float64 matrix; scalars are ``1x1``.
Operations record themselves on the active :class:`Tape` whenever one of
their inputs requires a gradient.  Outside a tape the same functions are
plain numpy arithmetic, which is what inference paths use.

Broadcasting is limited to a ``(1, c)`` row vector or a ``(1, 1)`` scalar
against an ``(r, c)`` matrix in :func:`add`, :func:`sub` and :func:`mul`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

_CHECKED = False
_ACTIVE: list["Tape"] = []

LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def set_checked(flag: bool) -> None:
    """Toggle rejection of NaN/Inf values at tensor creation."""
    global _CHECKED
    _CHECKED = bool(flag)


def is_checked() -> bool:
    return _CHECKED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        if _CHECKED and not np.all(np.isfinite(arr)):
            raise NumericError("non-finite entry in tensor data")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        if _CHECKED and not np.all(np.isfinite(arr)):
            raise NumericError("non-finite intermediate value")
        t.data = arr
        t.grad = None
        t.requires_grad = False
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications.

    Used as a context manager; nested tapes are allowed, the innermost one
    records.  A tape supports exactly one backward pass.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, output: Tensor) -> dict[Tensor, np.ndarray]:
        """Accumulate adjoints of ``output`` into every leaf's ``.grad``.

        Returns a mapping leaf -> gradient for the leaves that were reached.
        """
        if output.shape != (1, 1):
            raise ShapeError(f"backward needs a scalar output, got {output.shape}")
        if self.consumed:
            raise RuntimeError("tape already used for a backward pass")
        self.consumed = True

        produced = set()
        leaves: dict[int, Tensor] = {}
        for out, inputs, _ in self.records:
            produced.add(id(out))
            for x in inputs:
                if x.requires_grad and id(x) not in produced:
                    leaves.setdefault(id(x), x)

        adj: dict[int, np.ndarray] = {id(output): np.ones((1, 1))}
        for out, inputs, fn in reversed(self.records):
            g = adj.pop(id(out), None)
            if g is None:
                continue
            for x, gx in zip(inputs, fn(g)):
                if gx is None or not x.requires_grad:
                    continue
                key = id(x)
                if key in adj:
                    adj[key] = adj[key] + gx
                else:
                    adj[key] = gx

        result = {}
        for key, leaf in leaves.items():
            g = adj.get(key)
            if g is None:
                g = np.zeros_like(leaf.data)
            leaf.grad = g if leaf.grad is None else leaf.grad + g
            result[leaf] = leaf.grad
        return result


def backward(tape: Tape, output: Tensor) -> dict[Tensor, np.ndarray]:
    return tape.backward(output)


def _record(out: np.ndarray, inputs: tuple[Tensor, ...], fn: Callable) -> Tensor:
    t = Tensor._wrap(out)
    if _ACTIVE and any(x.requires_grad for x in inputs):
        t.requires_grad = True
        _ACTIVE[-1].records.append((t, inputs, fn))
    return t


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    for big, small in ((sa, sb), (sb, sa)):
        if small == (1, 1) or (small[0] == 1 and small[1] == big[1]):
            return
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == (1, 1):
        return np.array([[g.sum()]])
    return g.sum(axis=0, keepdims=True)


# -- primitives ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _record(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def transpose(a: Tensor) -> Tensor:
    return _record(a.data.T.copy(), (a,), lambda g: (g.T,))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _record(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _record(np.abs(a.data), (a,), lambda g: (g * sign,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _record(ad * ad, (a,), lambda g: (2.0 * g * ad,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def sum_rows(a: Tensor) -> Tensor:
    """Sum of each row, shape ``(rows, 1)``."""
    shape = a.shape
    return _record(
        a.data.sum(axis=1, keepdims=True), (a,), lambda g: (np.broadcast_to(g, shape).copy(),)
    )


def sum_cols(a: Tensor) -> Tensor:
    """Sum of each column, shape ``(1, cols)``."""
    shape = a.shape
    return _record(
        a.data.sum(axis=0, keepdims=True), (a,), lambda g: (np.broadcast_to(g, shape).copy(),)
    )


def row_softmax(a: Tensor) -> Tensor:
    """Row-wise softmax.  ``-inf`` entries map to exactly 0; a row that is
    entirely ``-inf`` maps to a row of zeros."""
    x = a.data
    m = np.max(x, axis=1, keepdims=True)
    dead = ~np.isfinite(m[:, 0])
    if dead.any():
        m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    s = e.sum(axis=1, keepdims=True)
    s[s == 0.0] = 1.0
    y = e / s

    def back(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _record(y, (a,), back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise each row over the feature dimension, then ``* gamma + beta``."""
    if gamma.shape != (1, x.shape[1]) or beta.shape != (1, x.shape[1]):
        raise ShapeError(f"layer_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    xd = x.data
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gamma.data

    def back(g):
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True))
        return (
            dx,
            (g * xhat).sum(axis=0, keepdims=True),
            g.sum(axis=0, keepdims=True),
        )

    return _record(xhat * gd + beta.data, (x, gamma, beta), back)


def expm_series(a: np.ndarray, min_terms: int | None = None, tol: float = 1e-18):
    """Truncated power series of ``e^A``.

    Runs at least ``min_terms`` (default: the matrix dimension) terms, which
    is exact for nilpotent matrices, and continues while the newest term is
    above ``tol``.  Returns ``(sum_{k<=K} A^k/k!, sum_{k<=K-1} A^k/k!)``.
    """
    n = a.shape[0]
    if min_terms is None:
        min_terms = n
    cap = max(min_terms, 4 * n + 40)
    total = np.eye(n)
    prev = total.copy()
    term = np.eye(n)
    k = 0
    while k < cap:
        k += 1
        term = term @ a / k
        prev = total.copy()
        total = total + term
        if k >= min_terms and not np.any(np.abs(term) > tol):
            break
    return total, prev


def trace_expm(a: Tensor) -> Tensor:
    """``tr(e^A)`` by truncated power series; gradient is the transposed
    series truncated one term earlier (exact for the truncated function)."""
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace_expm needs a square matrix, got {a.shape}")
    total, prev = expm_series(a.data)
    return _record(np.array([[np.trace(total)]]), (a,), lambda g: (g[0, 0] * prev.T,))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor._wrap(keep))


# -- optimisation -------------------------------------------------------------


class Adam:
    """Adam with decoupled weight decay (AdamW when ``weight_decay > 0``).

    ``frozen`` optionally gives, per parameter, a boolean mask of entries
    that must never move (e.g. logits pinned at ``-inf``).
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
        frozen: Sequence[np.ndarray | None] | None = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.frozen = list(frozen) if frozen is not None else [None] * len(self.params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads: Iterable[np.ndarray | None] | None = None) -> None:
        self.t += 1
        if grads is None:
            grads = [p.grad for p in self.params]
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                continue
            frozen = self.frozen[i]
            if frozen is not None:
                g = np.where(frozen, 0.0, g)
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            upd = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            if self.weight_decay:
                decay = self.lr * self.weight_decay * p.data
                upd = upd + (np.where(frozen, 0.0, decay) if frozen is not None else decay)
            if frozen is not None:
                upd = np.where(frozen, 0.0, upd)
            p.data = p.data - upd


# -- verification ---------------------------------------------------------------


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x: Tensor | np.ndarray, h: float = 1e-5
) -> float:
    """Max relative error between the tape gradient of scalar ``f`` at ``x``
    and central differences.  ``f`` must be pure (freeze any noise)."""
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
    tape.backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        if not np.isfinite(x0[idx]):
            continue
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        numeric[idx] = (f(Tensor(xp)).item() - f(Tensor(xm)).item()) / (2 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
