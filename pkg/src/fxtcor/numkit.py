"""Small numerical helpers: signed powers, symmetric eigenvalues, root
bracketing and a classical RK4 step."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class NumericalBlowUp(ArithmeticError):
    """Raised when a state or stage value stops being finite."""

    def __init__(self, t: float, where: str = "state"):
        super().__init__(f"non-finite {where} at t={t:.6g}")
        self.t = t
        self.where = where


class NoRootError(ValueError):
    """Raised when no sign change is found within the bracket cap."""


def signed_pow(x, num: int, den: int):
    """Return sign(x) * |x|**(num/den), elementwise, with 0 -> 0.

    `num` and `den` are positive odd integers, so this is the real odd-root
    branch for negative arguments.
    """
    if num <= 0 or den <= 0 or num % 2 == 0 or den % 2 == 0:
        raise ValueError(f"exponent {num}/{den} must use positive odd integers")
    p = num / den
    if np.ndim(x) == 0:
        x = float(x)
        if x == 0.0:
            return 0.0
        return math.copysign(math.exp(p * math.log(abs(x))), x)
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** p


def _symmetrize(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def jacobi_eigenvalues(a, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.

    The input is symmetrized by averaging with its transpose first.
    """
    a = _symmetrize(a)
    n = a.shape[0]
    scale = max(float(np.abs(a).max()), 1.0) if n else 1.0
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta**2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def sym_eig_extrema(a) -> tuple[float, float]:
    """(lambda_min, lambda_max) of the symmetrized matrix."""
    w = jacobi_eigenvalues(a)
    return float(w[0]), float(w[-1])


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    tol: float = 1e-10
    max_iter: int = 400
    hi_cap: float = 1e8

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise ValueError("bracket tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


def solve_root_increasing(f: Callable[[float], float], br: Bracket) -> float:
    """Bisection root of an increasing scalar function.

    If f(hi) is still negative the upper end is doubled until the sign
    changes or `br.hi_cap` is passed.
    """
    lo, hi = br.lo, br.hi
    flo = f(lo)
    if flo > 0:
        raise NoRootError(f"f(lo)={flo:.6g} > 0 at lo={lo:.6g}")
    if flo == 0:
        return lo
    fhi = f(hi)
    while fhi < 0 or math.isnan(fhi):
        if hi >= br.hi_cap:
            raise NoRootError(f"no sign change on [{br.lo:.6g}, {hi:.6g}]")
        lo, hi = hi, min(2.0 * hi, br.hi_cap) if hi > 0 else 1.0
        fhi = f(hi)
    for _ in range(br.max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= br.tol or mid in (lo, hi):
            break
        fm = f(mid)
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y, h: float) -> np.ndarray:
    """One classical Runge-Kutta step; raises NumericalBlowUp on non-finite stages."""
    if not h > 0:
        raise ValueError("step size must be positive")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(f(t, y), dtype=float)
    k2 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(f(t + h, y + h * k3), dtype=float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NumericalBlowUp(t, "stage")
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowUp(t + h)
    return out
