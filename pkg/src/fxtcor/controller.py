"""Adaptive backstepping controller driven by the observer's vhat chain.

Coordinates z_1 = x_1 - X vhat and z_s = x_s - X vhat^(s-1) - alpha_{s-1}
with X = -R. The virtual laws alpha_s and the input u are built stage by
stage on jets seeded at

    x_1..x_n                      -> seeds 0..n-1
    vhat^(0)..vhat^(n-1) (q each) -> seeds n..n+nq-1
    theta_hat (m)                 -> seeds n+nq..n+nq+m-1

so every partial of alpha_{s-1} that stage s needs is read off its jet.
Stage s runs at jet order n - s. The controller never sees v or the true
theta; its inputs are x, the vhat chain and theta_hat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import jets
from .jets import j_acc_mul, j_partial_into, j_powi
from .plant import AgentModel, phi_jets

EPS_IL_MAX = (2.0 / 3.0) ** 1.5


class ControllerBlowUp(ArithmeticError):
    def __init__(self, stage: int):
        super().__init__(f"non-finite controller value at stage {stage}")
        self.stage = stage


@dataclass(frozen=True)
class AgentGains:
    """Gains of one agent; per-stage arrays have length n."""

    kappa: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    chi: np.ndarray
    zeta1: float
    zeta2: float
    gamma: np.ndarray  # (m, m), symmetric positive definite
    eps_il: np.ndarray  # (m,)

    def __post_init__(self):
        for name in ("kappa", "eta", "rho", "chi", "eps_il"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        g = np.atleast_2d(np.array(self.gamma, dtype=float))
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        n = self.kappa.shape[0]
        if not all(getattr(self, k).shape == (n,) for k in ("eta", "rho", "chi")):
            raise ValueError("kappa, eta, rho and chi need one entry per stage")
        for name in ("kappa", "eta", "chi"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be positive")
        if np.any(self.rho <= 0.5):
            raise ValueError("rho must exceed 1/2")
        if not (self.zeta1 > 0 and self.zeta2 > 0):
            raise ValueError("zeta1 and zeta2 must be positive")
        m = g.shape[0]
        if g.shape != (m, m) or not np.allclose(g, g.T, rtol=0, atol=1e-12):
            raise ValueError("Gamma must be a symmetric square matrix")
        if np.linalg.eigvalsh(g)[0] <= 0:
            raise ValueError("Gamma must be positive definite")
        if self.eps_il.shape != (m,) or np.any(self.eps_il <= 0) or np.any(self.eps_il >= EPS_IL_MAX):
            raise ValueError(f"eps_il needs m entries in (0, {EPS_IL_MAX:.6f})")

    @property
    def n(self) -> int:
        return self.kappa.shape[0]

    @property
    def m(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True)
class ControllerParams:
    beta: int
    agents: tuple[AgentGains, ...]
    varpi: float = 0.5

    def __post_init__(self):
        if int(self.beta) != self.beta or self.beta < 1:
            raise ValueError("beta must be a positive integer")
        if not 0 < self.varpi < 1:
            raise ValueError("varpi must lie in (0, 1)")
        object.__setattr__(self, "agents", tuple(self.agents))


@njit(cache=True)
def backstep_kernel(x, V, th, fam, fpar, b, R, xi, kap, eta, rho, chi, beta, zeta1, zeta2, Gam, T):
    """Evaluate the whole stage recursion for one agent.

    V holds vhat^(0..n) as rows. Returns (u, alphas, zs, tau_n, phi, status)
    where row s-1 of alphas is the jet of alpha_s for s < n (valid to order
    n - s), zs holds the jets of z_s, tau_n and phi are plain values and
    status is 0 or the first stage that produced a non-finite value.
    Jets at order o are the first nup[o] coefficients of each row.
    """
    nup = T[4]
    n = x.shape[0]
    q = R.shape[0]
    m = th.shape[0]
    d = n - 1
    nc = nup[d]

    X = np.zeros((n, nc))
    for l in range(n):
        X[l, 0] = x[l]
        if d > 0:
            X[l, 1 + l] = 1.0
    VH = np.zeros((n, q, nc))
    for l in range(n):
        for c in range(q):
            VH[l, c, 0] = V[l, c]
            if d > 0:
                VH[l, c, 1 + n + l * q + c] = 1.0
    TH = np.zeros((m, nc))
    TH3 = np.zeros((m, nc))
    for k in range(m):
        TH[k, 0] = th[k]
        if d > 0:
            TH[k, 1 + n + n * q + k] = 1.0
    o3 = max(d - 1, 0)  # theta_hat^3 is first needed at stage 2
    for k in range(m):
        sq = np.zeros(nc)
        j_acc_mul(sq, TH[k], TH[k], 1.0, o3, T)
        j_acc_mul(TH3[k], sq, TH[k], 1.0, o3, T)
    PHI = phi_jets(fam, fpar, X, m, d, T)
    nz = np.zeros((n, m), dtype=np.bool_)
    for l in range(n):
        for k in range(m):
            nz[l, k] = np.any(PHI[l, k] != 0.0)

    alphas = np.zeros((n, nc))
    zs = np.zeros((n, nc))
    tau = np.zeros((m, nc))
    damp_c = kap * chi ** (1.5 - 2.0 * beta)
    u = 0.0

    for s in range(n):  # 0-based stage index
        o = d - s
        L = nup[o]
        z = zs[s]
        z[:L] = X[s, :L]
        for c in range(q):
            if R[c] != 0.0:
                z[:L] += R[c] * VH[s, c, :L]
        if s > 0:
            z[:L] -= alphas[s - 1, :L]

        expr = np.zeros(L)
        for k in range(m):
            if nz[s, k]:
                j_acc_mul(expr, PHI[s, k], TH[k], -1.0, o, T)
        for c in range(q):
            if b[s, c] != 0.0:
                expr -= b[s, c] * VH[0, c, :L]
        if beta == 1:
            expr -= damp_c[s] * z[:L]
        else:
            pw = j_powi(z, 2 * beta - 1, o, T)
            expr -= damp_c[s] * pw
        z2 = np.zeros(L)
        j_acc_mul(z2, z, z, 1.0, o, T)
        j_acc_mul(expr, z2, z, -eta[s], o, T)
        expr -= rho[s] * z[:L]

        if s == 0:
            for k in range(m):
                if nz[0, k]:
                    j_acc_mul(tau[k], PHI[0, k], z, 1.0, o, T)
        else:
            prev = alphas[s - 1]
            op = o + 1
            expr -= zs[s - 1, :L]
            DX = np.zeros((s, L))
            for l in range(s):
                j_partial_into(DX[l], prev, l, op, T)
            # omega = phi_s - sum_l dalpha_{s-1}/dx_l phi_l
            omega = np.zeros((m, L))
            for k in range(m):
                omega[k] = PHI[s, k, :L]
                for l in range(s):
                    if nz[l, k]:
                        j_acc_mul(omega[k], DX[l], PHI[l, k], -1.0, o, T)
            flow = np.zeros(L)
            sqd = np.zeros(L)
            for l in range(s):
                flow[:] = X[l + 1, :L]
                for c in range(q):
                    if b[l, c] != 0.0:
                        flow += b[l, c] * VH[0, c, :L]
                for k in range(m):
                    if nz[l, k]:
                        j_acc_mul(flow, PHI[l, k], TH[k], 1.0, o, T)
                j_acc_mul(expr, DX[l], flow, 1.0, o, T)
                if xi[l] != 0.0:
                    j_acc_mul(sqd, DX[l], DX[l], xi[l], o, T)
            j_acc_mul(expr, sqd, z, -0.5, o, T)
            buf = np.zeros(L)
            for l in range(s):
                for c in range(q):
                    j_partial_into(buf, prev, n + l * q + c, op, T)
                    j_acc_mul(expr, buf, VH[l + 1, c], 1.0, o, T)
            for k in range(m):
                j_acc_mul(tau[k], omega[k], z, 1.0, o, T)
            # theta_hat rate Gamma (tau_s - zeta1 th - zeta2 th^3)
            inner = np.zeros((m, L))
            for k in range(m):
                inner[k] = tau[k, :L] - zeta1 * TH[k, :L] - zeta2 * TH3[k, :L]
            for k in range(m):
                j_partial_into(buf, prev, n + n * q + k, op, T)
                for r in range(m):
                    if Gam[k, r] != 0.0:
                        j_acc_mul(expr, buf, inner[r], Gam[k, r], o, T)
            # (sum_{l=1}^{s-2} dalpha_l/dtheta z_{l+1}) Gamma omega
            if s >= 2:
                cross = np.zeros((m, L))
                for l in range(s - 1):
                    for k in range(m):
                        j_partial_into(buf, alphas[l], n + n * q + k, d - l, T)
                        j_acc_mul(cross[k], buf, zs[l + 1], 1.0, o, T)
                for k in range(m):
                    for r in range(m):
                        if Gam[k, r] != 0.0:
                            j_acc_mul(expr, cross[k], omega[r], Gam[k, r], o, T)

        if s < n - 1:
            alphas[s, :L] = expr
            if not np.isfinite(expr[0]):
                return 0.0, alphas, zs, tau[:, 0].copy(), PHI[:, :, 0].copy(), s + 1
        else:
            u = expr[0]
            for c in range(q):
                u -= R[c] * V[n, c]
            if not np.isfinite(u):
                return u, alphas, zs, tau[:, 0].copy(), PHI[:, :, 0].copy(), s + 1
    return u, alphas, zs, tau[:, 0].copy(), PHI[:, :, 0].copy(), 0


@njit(cache=True)
def adaptive_rate(tau_n, th, zeta1, zeta2, Gam):
    return Gam @ (tau_n - zeta1 * th - zeta2 * th ** 3)


@dataclass
class BackstepResult:
    u: float
    z: np.ndarray  # z_1..z_n values
    alphas: list  # Jet of alpha_s, s = 1..n-1
    tau_n: np.ndarray
    phi: np.ndarray  # (n, m) values
    tab: jets.JetTables = field(repr=False)


def seed_index(n: int, q: int, kind: str, l: int, c: int = 0) -> int:
    """Seed position of x_l (l = 1..n), vhat^(l) (l = 0..n-1, component c) or theta_hat_l (l = 1..m)."""
    if kind == "x":
        return l - 1
    if kind == "vhat":
        return n + l * q + c
    if kind == "theta":
        return n + n * q + l - 1
    raise ValueError(f"unknown seed kind {kind!r}")


def jet_tables_for(agent: AgentModel) -> jets.JetTables:
    n, q, m = agent.n, agent.q, agent.m
    return jets.tables(n + n * q + m, n - 1)


def backstep(agent: AgentModel, gains: AgentGains, beta: int, x, vchain, theta_hat) -> BackstepResult:
    """Control input and intermediate laws for one agent.

    `vchain` holds vhat^(0..n) as rows (see observer.vhat_derivatives).
    """
    n, q, m = agent.n, agent.q, agent.m
    x = np.asarray(x, dtype=float)
    V = np.asarray(vchain, dtype=float)
    th = np.asarray(theta_hat, dtype=float)
    if x.shape != (n,) or V.shape != (n + 1, q) or th.shape != (m,):
        raise ValueError("dimension mismatch in backstep")
    if gains.n != n or gains.m != m:
        raise ValueError("gain dimensions do not match the agent")
    tab = jet_tables_for(agent)
    u, A, Z, tau_n, phi, status = backstep_kernel(
        x, V, th, agent.family_id, agent.fpar, agent.b, agent.R, agent.xi,
        gains.kappa, gains.eta, gains.rho, gains.chi, int(beta), gains.zeta1, gains.zeta2, gains.gamma, tab.T)
    if status:
        raise ControllerBlowUp(int(status))
    alphas = [jets.Jet(A[s], tab, n - 1 - s) for s in range(n - 1)]
    return BackstepResult(float(u), Z[:, 0].copy(), alphas, tau_n, phi, tab)


def transforms(agent: AgentModel, x, vchain, alpha_values) -> np.ndarray:
    """z_1 = x_1 + R vhat and z_s = x_s + R vhat^(s-1) - alpha_{s-1}."""
    x = np.asarray(x, dtype=float)
    V = np.asarray(vchain, dtype=float)
    z = x[: agent.n] + V[: agent.n] @ agent.R
    z[1:] -= np.asarray(alpha_values, dtype=float)[: agent.n - 1]
    return z


def tuning_tau(phi, dalpha_dx, z) -> np.ndarray:
    """tau_s for s = 1..n as rows, from plain values.

    phi is (n, m); dalpha_dx[k][l] is d alpha_{k+1} / d x_{l+1}; z holds
    z_1..z_n.
    """
    phi = np.asarray(phi, dtype=float)
    n, m = phi.shape
    taus = np.zeros((n, m))
    taus[0] = phi[0] * z[0]
    for s in range(1, n):
        omega = phi[s] - sum(dalpha_dx[s - 1][l] * phi[l] for l in range(s))
        taus[s] = taus[s - 1] + omega * z[s]
    return taus


def adaptive_rhs(gains: AgentGains, tau_n, theta_hat) -> np.ndarray:
    th = np.asarray(theta_hat, dtype=float)
    return gains.gamma @ (np.asarray(tau_n, dtype=float) - gains.zeta1 * th - gains.zeta2 * th ** 3)
