"""Exosystem and strict-feedback agents.

Agent i obeys

    x_s' = x_{s+1} + phi_s(x_1..x_s)^T theta + b_s v,   s < n
    x_n' = u + phi_n(x)^T theta + b_n v
    e    = x_1 + R v

Nonlinearity families live in a small registry. Each family is evaluated by
one compiled kernel on jets, so the same code gives plain values (order-0
jets) and the derivatives the backstepping laws need. Families must not
depend on t explicitly: the control laws carry no partial in t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import jets
from .jets import j_mul, j_sin
from .numkit import sym_eig_extrema

FAMILY_ZERO = 0
FAMILY_MANIPULATOR = 1
FAMILY_POLYSINE = 2

FAMILIES = {"zero": FAMILY_ZERO, "manipulator": FAMILY_MANIPULATOR, "polynomial-sine": FAMILY_POLYSINE}


@njit(cache=True)
def phi_jets(fam, fpar, X, m, o, T):
    """phi_s for s = 1..n on jets truncated at order o: returns (n, m, nup[o]).

    X is (n, ncoef), the jets of x_1..x_n.
    """
    n = X.shape[0]
    L = T[4][o]
    out = np.zeros((n, m, L))
    if fam == FAMILY_MANIPULATOR:
        # phi_2 = [sin x1, x2, 0, 0], phi_3 = [0, 0, x2, x3]
        out[1, 0] = j_sin(X[0], o, T)
        out[1, 1] = X[1, :L]
        out[2, 2] = X[1, :L]
        out[2, 3] = X[2, :L]
    elif fam == FAMILY_POLYSINE:
        # phi_{s,k} = A sin(x_j) + B x_j x_s + C x_s with j = 1 + (k mod s)
        for s in range(n):
            for k in range(m):
                j = k % (s + 1)
                base = 3 * (s * m + k)
                A, B, C = fpar[base], fpar[base + 1], fpar[base + 2]
                acc = C * X[s, :L]
                if A != 0.0:
                    acc = acc + A * j_sin(X[j], o, T)
                if B != 0.0:
                    acc = acc + B * j_mul(X[j], X[s], o, T)
                out[s, k] = acc
    return out


_VALUE_TABLES = jets.tables(0, 0)


@dataclass(frozen=True)
class Exosystem:
    S: np.ndarray
    q: int = field(init=False)

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"S must be square, got shape {S.shape}")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "q", S.shape[0])


def exo_rhs(e: Exosystem, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (e.q,):
        raise ValueError(f"v must have length {e.q}")
    return e.S @ v


@dataclass(frozen=True)
class ExoReport:
    ok: bool
    reason: str
    offending: complex | None
    lam_max_sym: float  # lambda_max(S + S^T)


def validate_exosystem(e: Exosystem, re_tol: float = 1e-8, cluster_tol: float = 1e-7) -> ExoReport:
    """Eigenvalues on the imaginary axis and S diagonalizable."""
    _, lam_max = sym_eig_extrema(e.S + e.S.T)
    ev = np.linalg.eigvals(e.S)
    for lam in ev:
        if abs(lam.real) >= re_tol:
            return ExoReport(False, "eigenvalue with nonzero real part", complex(lam), lam_max)
    seen: list[complex] = []
    for lam in ev:
        if any(abs(lam - s) < cluster_tol for s in seen):
            continue
        seen.append(lam)
        mult = int(np.sum(np.abs(ev - lam) < cluster_tol))
        geo = e.q - np.linalg.matrix_rank(e.S - lam * np.eye(e.q), tol=cluster_tol)
        if geo < mult:
            return ExoReport(False, "not semi-simple", complex(lam), lam_max)
    return ExoReport(True, "", None, lam_max)


@dataclass(frozen=True)
class AgentModel:
    """One strict-feedback agent. `theta` is ground truth for simulation only."""

    family: str
    theta: np.ndarray
    b: np.ndarray  # (n, q)
    R: np.ndarray  # (q,)
    fpar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n: int = field(init=False)
    m: int = field(init=False)
    q: int = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; known: {sorted(FAMILIES)}")
        theta = np.array(self.theta, dtype=float).reshape(-1)
        b = np.atleast_2d(np.array(self.b, dtype=float))
        R = np.array(self.R, dtype=float).reshape(-1)
        fpar = np.array(self.fpar, dtype=float).reshape(-1)
        n, q = b.shape
        m = theta.shape[0]
        if R.shape[0] != q:
            raise ValueError("R length must equal the exosystem dimension")
        if self.family == "manipulator" and (n, m) != (3, 4):
            raise ValueError("the manipulator family needs n = 3 and m = 4")
        if self.family == "polynomial-sine" and fpar.shape[0] != 3 * n * m:
            raise ValueError(f"polynomial-sine needs 3*n*m = {3 * n * m} parameters")
        for name, arr in (("theta", theta), ("b", b), ("R", R), ("fpar", fpar)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)

    @property
    def family_id(self) -> int:
        return FAMILIES[self.family]

    @property
    def xi(self) -> np.ndarray:
        """xi_l = sign(||b_l||)."""
        return (np.linalg.norm(self.b, axis=1) > 0).astype(float)

    def phi(self, x) -> np.ndarray:
        """(n, m) array whose row s is phi_{s+1}(x)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"x must have length {self.n}")
        t = _VALUE_TABLES
        return phi_jets(self.family_id, self.fpar, x.reshape(self.n, 1), self.m, 0, t.T)[:, :, 0]

    def phi_jet(self, X: list[jets.Jet]) -> list[list[jets.Jet]]:
        tab = X[0].tab
        o = min(j.order for j in X)
        L = tab.nup[o]
        arr = phi_jets(self.family_id, self.fpar, np.stack([j.c[:L] for j in X]), self.m, o, tab.T)
        return [[jets.Jet(arr[s, k], tab, o) for k in range(self.m)] for s in range(self.n)]


@dataclass(frozen=True)
class ManipulatorParams:
    index: int
    D: float = 1.0
    M: float = 1.0

    @property
    def B(self) -> float:
        return 0.2 * self.index

    @property
    def N(self) -> float:
        return 0.1 * self.index

    @property
    def K(self) -> float:
        return 0.2 * self.index

    @property
    def G(self) -> float:
        return 0.1 * self.index


def manipulator_agent(index: int) -> AgentModel:
    """One-link manipulator with motor dynamics (D = M = 1) in strict-feedback form.

    States are link angle, link velocity and motor shaft angle; the
    torque disturbance is [0, 1] v.
    """
    p = ManipulatorParams(index)
    theta = np.array([-p.N, -p.B, -p.K, -p.G])
    b = np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    return AgentModel("manipulator", theta, b, np.array([1.0, 0.0]))


def agent_rhs(a: AgentModel, t: float, x, u: float, v) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != (a.n,) or v.shape != (a.q,):
        raise ValueError("dimension mismatch in agent_rhs")
    dx = a.phi(x) @ a.theta + a.b @ v
    dx[:-1] += x[1:]
    dx[-1] += u
    return dx


def regulated_output(a: AgentModel, x, v) -> float:
    return float(np.asarray(x, dtype=float)[0] + a.R @ np.asarray(v, dtype=float))
