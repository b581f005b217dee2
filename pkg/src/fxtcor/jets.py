"""Truncated multivariate Taylor jets for forward-mode differentiation.

A jet over K seed variables at order d stores the Taylor coefficients of a
function around the seed point for every monomial of degree <= d, in graded
order: the constant first, then the K linear monomials, then the degree-2
monomials, and so on. Coefficient c_alpha multiplies delta**alpha, so the
first partial along seed v sits at index 1 + v.

The backstepping laws differentiate the previous stage's law, which itself
holds first partials of the stage before; a chain of n stages therefore
needs order n - 1 jets. Each operation takes a `valid order` o and only
reads coefficients of degree <= o. Because of the graded order, truncating
a jet to order o is taking the first nup[o] coefficients, so kernels return
arrays of exactly that length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from numba import njit


@dataclass(frozen=True)
class JetTables:
    K: int
    d: int
    exps: np.ndarray  # (ncoef, K) monomial exponents
    deg: np.ndarray  # (ncoef,)
    nup: np.ndarray  # nup[o] = number of monomials of degree <= o
    prod: np.ndarray  # (npairs, 3) rows (i, j, k) with exps[i] + exps[j] == exps[k]
    pcut: np.ndarray  # pcut[o] = number of product rows with deg[k] <= o
    up: np.ndarray  # up[v, k] = index of exps[k] + e_v (for deg[k] < d)
    upfac: np.ndarray  # upfac[v, k] = exps[k][v] + 1

    @property
    def ncoef(self) -> int:
        return int(self.nup[-1])

    @property
    def T(self):
        """The arrays the compiled kernels take, bundled as one tuple."""
        return (self.prod, self.pcut, self.up, self.upfac, self.nup)


@lru_cache(maxsize=None)
def tables(K: int, d: int) -> JetTables:
    monos: list[tuple[int, ...]] = []
    for g in range(d + 1):
        for combo in combinations_with_replacement(range(K), g):
            e = [0] * K
            for v in combo:
                e[v] += 1
            monos.append(tuple(e))
    index = {e: k for k, e in enumerate(monos)}
    exps = np.array(monos, dtype=np.int64).reshape(len(monos), K)
    deg = exps.sum(axis=1)
    nup = np.array([int(np.sum(deg <= o)) for o in range(d + 1)], dtype=np.int64)

    rows = []
    for k, ek in enumerate(monos):
        for i, ei in enumerate(monos):
            if deg[i] > deg[k]:
                break
            ej = tuple(a - b for a, b in zip(ek, ei))
            if all(v >= 0 for v in ej):
                rows.append((i, index[ej], k))
    prod = np.array(sorted(rows, key=lambda r: deg[r[2]]), dtype=np.int64).reshape(-1, 3)
    pcut = np.array([int(np.sum(deg[prod[:, 2]] <= o)) for o in range(d + 1)], dtype=np.int64)

    ncoef = len(monos)
    up = np.zeros((K, ncoef), dtype=np.int64)
    upfac = np.zeros((K, ncoef), dtype=np.float64)
    for k, ek in enumerate(monos):
        if deg[k] >= d:
            continue
        for v in range(K):
            e = list(ek)
            e[v] += 1
            up[v, k] = index[tuple(e)]
            upfac[v, k] = ek[v] + 1
    return JetTables(K, d, exps, deg, nup, prod, pcut, up, upfac)


@njit(cache=True)
def j_var(value, v, ncoef):
    out = np.zeros(ncoef)
    out[0] = value
    out[1 + v] = 1.0
    return out


@njit(cache=True)
def j_const(value, ncoef):
    out = np.zeros(ncoef)
    out[0] = value
    return out


@njit(cache=True)
def j_mul(a, b, o, T):
    """Product truncated at order o; the result has length nup[o]."""
    prod, pcut, nup = T[0], T[1], T[4]
    out = np.zeros(nup[o])
    for r in range(pcut[o]):
        out[prod[r, 2]] += a[prod[r, 0]] * b[prod[r, 1]]
    return out


@njit(cache=True)
def j_acc_mul(out, a, b, coef, o, T):
    """out += coef * a * b, truncated at order o, in place."""
    prod, pcut = T[0], T[1]
    for r in range(pcut[o]):
        out[prod[r, 2]] += coef * a[prod[r, 0]] * b[prod[r, 1]]


@njit(cache=True)
def j_partial_into(out, a, v, o, T):
    """Write the partial along seed v of a (valid to order o) into out."""
    up, upfac = T[2], T[3]
    if o == 0:
        out[:] = 0.0
        return
    for k in range(out.shape[0]):
        out[k] = upfac[v, k] * a[up[v, k]]


@njit(cache=True)
def j_partial(a, v, o, T):
    """Partial along seed v of a jet valid to order o; length nup[o - 1]."""
    up, upfac, nup = T[2], T[3], T[4]
    if o == 0:
        return np.zeros(1)
    out = np.empty(nup[o - 1])
    for k in range(nup[o - 1]):
        out[k] = upfac[v, k] * a[up[v, k]]
    return out


@njit(cache=True)
def j_powi(a, k, o, T):
    out = np.zeros(T[4][o])
    out[0] = 1.0
    for _ in range(k):
        out = j_mul(out, a, o, T)
    return out


@njit(cache=True)
def _compose(a, derivs, o, T):
    """sum_r derivs[r] / r! * (a - a0)**r, the Taylor composition f(a)."""
    L = T[4][o]
    da = a[:L].copy()
    da[0] = 0.0
    out = np.zeros(L)
    out[0] = derivs[0]
    p = np.zeros(L)
    p[0] = 1.0
    fact = 1.0
    for r in range(1, o + 1):
        p = j_mul(p, da, o, T)
        fact *= r
        out += (derivs[r] / fact) * p
    return out


@njit(cache=True)
def j_sin(a, o, T):
    a0 = a[0]
    derivs = np.empty(o + 1)
    for r in range(o + 1):
        m = r % 4
        if m == 0:
            derivs[r] = math.sin(a0)
        elif m == 1:
            derivs[r] = math.cos(a0)
        elif m == 2:
            derivs[r] = -math.sin(a0)
        else:
            derivs[r] = -math.cos(a0)
    return _compose(a, derivs, o, T)


@njit(cache=True)
def j_cos(a, o, T):
    a0 = a[0]
    derivs = np.empty(o + 1)
    for r in range(o + 1):
        m = r % 4
        if m == 0:
            derivs[r] = math.cos(a0)
        elif m == 1:
            derivs[r] = -math.sin(a0)
        elif m == 2:
            derivs[r] = -math.cos(a0)
        else:
            derivs[r] = math.sin(a0)
    return _compose(a, derivs, o, T)


class Jet:
    """Python-side view of a jet coefficient array, for tests and inspection."""

    __slots__ = ("c", "tab", "order")

    def __init__(self, c, tab: JetTables, order: int | None = None):
        self.order = tab.d if order is None else order
        self.c = np.asarray(c, dtype=float)[: tab.nup[self.order]]
        self.tab = tab

    @classmethod
    def var(cls, tab: JetTables, v: int, value: float) -> "Jet":
        return cls(j_var(float(value), v, tab.ncoef), tab)

    @classmethod
    def const(cls, tab: JetTables, value: float) -> "Jet":
        return cls(j_const(float(value), tab.ncoef), tab)

    def _lift(self, other) -> "Jet":
        return other if isinstance(other, Jet) else Jet.const(self.tab, other)

    @property
    def value(self) -> float:
        return float(self.c[0])

    @property
    def grad(self) -> np.ndarray:
        """First partials along every seed; needs order >= 1."""
        if self.order == 0:
            raise ValueError("an order-0 jet has no partials")
        return self.c[1:1 + self.tab.K].copy()

    def partial(self, v: int) -> "Jet":
        t = self.tab
        if self.order == 0:
            raise ValueError("an order-0 jet has no partials")
        return Jet(j_partial(self.c, v, self.order, t.T), t, self.order - 1)

    def __add__(self, other):
        o = self._lift(other)
        order = min(self.order, o.order)
        L = self.tab.nup[order]
        return Jet(self.c[:L] + o.c[:L], self.tab, order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.tab, self.order)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * float(other), self.tab, self.order)
        o = min(self.order, other.order)
        return Jet(j_mul(self.c, other.c, o, self.tab.T), self.tab, o)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("jets support nonnegative integer powers only")
        return Jet(j_powi(self.c, int(k), self.order, self.tab.T), self.tab, self.order)

    def sin(self) -> "Jet":
        return Jet(j_sin(self.c, self.order, self.tab.T), self.tab, self.order)

    def cos(self) -> "Jet":
        return Jet(j_cos(self.c, self.order, self.tab.T), self.tab, self.order)

    def __repr__(self):
        return f"Jet(value={self.value:.6g}, order={self.order}, K={self.tab.K})"
