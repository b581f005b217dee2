"""Distributed resilient fixed-time observer.

Each agent runs a local filter chain vhat -> eps_1 -> ... -> eps_n; only the
last layer talks to neighbours (and to the leader, whose eps_0n is v), and
only over links that are not under attack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class ObserverParams:
    delta1: float
    delta2: float
    delta3: float
    mu1: float
    mu2: float
    mu3: float
    a: int
    b: int
    eps_sing: float = 1e-2  # dead band of the derivative chain, see vhat_chain

    def __post_init__(self):
        a, b = self.a, self.b
        if int(a) != a or int(b) != b or a <= 0 or b <= 0 or a % 2 == 0 or b % 2 == 0:
            raise ValueError(f"a and b must be positive odd integers, got a={a}, b={b}")
        if not a < b:
            raise ValueError("a must be smaller than b")
        if not self.eps_sing >= 0:
            raise ValueError("eps_sing must be nonnegative")

    def validate_positive(self):
        """All six gains positive, as the convergence result requires."""
        for name in ("delta1", "delta2", "delta3", "mu1", "mu2", "mu3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def exponential_reduction(self) -> "ObserverParams":
        """Same linear gains with every fractional term switched off."""
        return ObserverParams(self.delta1, 0.0, 0.0, self.mu1, 0.0, 0.0, self.a, self.b, self.eps_sing)

    def as_array(self) -> np.ndarray:
        return np.array([self.delta1, self.delta2, self.delta3, self.mu1, self.mu2, self.mu3,
                         self.a / self.b, self.eps_sing])


@njit(cache=True)
def sp(x, p):
    """sign(x) |x|**p with 0 -> 0."""
    if x == 0.0:
        return 0.0
    if x > 0.0:
        return x ** p
    return -((-x) ** p)


@njit(cache=True)
def _filter(w, d1, d2, d3, p):
    return d1 * w + d2 * sp(w, p) + d3 * sp(w, 2.0 - p)


@njit(cache=True)
def observer_rhs_kernel(S, G, v, VH, EPS, par):
    """Derivatives of vhat (N, q) and eps (N, n, q).

    G is the attack-gated (N+1) x (N+1) adjacency with the leader at index 0.
    """
    d1, d2, d3, m1, m2, m3, p = par[0], par[1], par[2], par[3], par[4], par[5], par[6]
    N, n, q = EPS.shape
    dVH = np.empty_like(VH)
    dEPS = np.empty_like(EPS)
    for i in range(N):
        for c in range(q):
            acc = 0.0
            for r in range(q):
                acc += S[c, r] * VH[i, r]
            dVH[i, c] = acc - _filter(VH[i, c] - EPS[i, 0, c], d1, d2, d3, p)
        for k in range(n):
            for c in range(q):
                acc = 0.0
                for r in range(q):
                    acc += S[c, r] * EPS[i, k, r]
                if k < n - 1:
                    acc -= _filter(EPS[i, k, c] - EPS[i, k + 1, c], d1, d2, d3, p)
                else:
                    for j in range(N + 1):
                        g = G[i + 1, j]
                        if g == 0.0:
                            continue
                        other = v[c] if j == 0 else EPS[j - 1, n - 1, c]
                        acc -= g * _filter(EPS[i, k, c] - other, m1, m2, m3, p)
                dEPS[i, k, c] = acc
    return dVH, dEPS


@njit(cache=True)
def vhat_chain(S, vh, eps, par, order):
    """vhat^(0..order) for one agent, shape (order + 1, q).

    Works on Taylor coefficients in time: layer 0 is vhat, layer k is eps_k,
    and each layer obeys y' = S y - f(y - y_next). Layer k needs coefficients
    up to order n - k, so the top layer eps_n only contributes its value and
    the chain stays local to the agent.

    f has a fractional part g(w) = d2 w^p + d3 w^(2-p) whose derivatives of
    order r >= 1 blow up like |w|^(p-r) as w -> 0, and a fixed-step
    integrator leaves w hovering at a small nonzero floor instead of at 0.
    Inside the dead band |w| < eps_sing the chain treats the layer as
    converged and drops g altogether, so the derivatives come from the
    linear part alone. The observer state itself always integrates the
    full f.
    """
    d1, d2, d3, p, guard = par[0], par[1], par[2], par[6], par[7]
    n, q = eps.shape
    Y = np.zeros((n + 1, order + 1, q))
    Y[0, 0] = vh
    for k in range(n):
        Y[k + 1, 0] = eps[k]
    pw = np.array([p, 2.0 - p])
    gains = np.array([d2, d3])
    for j in range(order):
        for k in range(order - j):
            for c in range(q):
                w0 = Y[k, 0, c] - Y[k + 1, 0, c]
                F = d1 * (Y[k, j, c] - Y[k + 1, j, c])
                if abs(w0) < guard or w0 == 0.0:
                    pass
                elif j == 0:
                    F += d2 * sp(w0, p) + d3 * sp(w0, 2.0 - p)
                else:
                    # Faa di Bruno through the power series of w(t) - w0
                    dw = np.zeros(j + 1)
                    for r in range(1, j + 1):
                        dw[r] = Y[k, r, c] - Y[k + 1, r, c]
                    pr = np.zeros(j + 1)
                    pr[0] = 1.0
                    fact = 1.0
                    sgn = 1.0 if w0 > 0.0 else -1.0
                    aw = abs(w0)
                    for r in range(1, j + 1):
                        nxt = np.zeros(j + 1)
                        for u in range(j + 1):
                            if pr[u] == 0.0:
                                continue
                            for s in range(1, j + 1 - u):
                                nxt[u + s] += pr[u] * dw[s]
                        pr = nxt
                        fact *= r
                        g_r = 0.0
                        for e in range(2):
                            if gains[e] == 0.0:
                                continue
                            ff = 1.0
                            for t in range(r):
                                ff *= pw[e] - t
                            g_r += gains[e] * ff * sgn ** (r + 1) * aw ** (pw[e] - r)
                        F += g_r / fact * pr[j]
                acc = 0.0
                for r in range(q):
                    acc += S[c, r] * Y[k, j, r]
                Y[k, j + 1, c] = (acc - F) / (j + 1)
    out = np.empty((order + 1, q))
    fact = 1.0
    for j in range(order + 1):
        if j > 0:
            fact *= j
        out[j] = fact * Y[0, j]
    return out


def observer_rhs(p: ObserverParams, S, G, v, vhat, eps):
    """Python entry point: returns (dvhat, deps) for stacked agent arrays."""
    return observer_rhs_kernel(np.asarray(S, float), np.asarray(G, float), np.asarray(v, float),
                               np.asarray(vhat, float), np.asarray(eps, float), p.as_array())


def vhat_derivatives(p: ObserverParams, S, vhat, eps, order: int) -> np.ndarray:
    """Rows vhat^(0), vhat^(1), ..., vhat^(order) for one agent."""
    eps = np.atleast_2d(np.asarray(eps, dtype=float))
    n = eps.shape[0]
    if not 0 <= order <= n:
        raise ValueError(f"order must be within 0..{n}, got {order}")
    return vhat_chain(np.asarray(S, float), np.asarray(vhat, float), eps, p.as_array(), order)


def lyapunov_u(eps_top, v) -> float:
    """U = 1/2 sum_i ||eps_in - v||^2 for a stacked (N, q) top layer."""
    d = np.asarray(eps_top, dtype=float) - np.asarray(v, dtype=float)
    return 0.5 * float(np.sum(d * d))
