"""Closed-loop assembly and fixed-step integration.

Global state layout, fixed for reproducible traces:

    [v | agent 1: x (n), eps_1..eps_n (n*q), vhat (q), theta_hat (m) | agent 2 ... ]

The time grid is k*h plus every attack switch time, so the gated adjacency
is constant inside each RK4 step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import dos
from .controller import ControllerParams, backstep_kernel, jet_tables_for
from .dos import DosSchedule
from .numkit import NumericalBlowUp
from .observer import ObserverParams, observer_rhs_kernel, vhat_chain
from .plant import AgentModel, Exosystem
from .topology import Topology


C_STAB = 1.0  # h * (controller decay rate) allowed per RK4 step; the real-axis limit is 2.78
MAX_SUBSTEPS = 50_000  # per grid step; about 10x the worst transient seen on the shipped scenarios


@dataclass(frozen=True)
class InitialConditions:
    v: np.ndarray  # (q,)
    x: np.ndarray  # (N, n)
    vhat: np.ndarray  # (N, q)
    eps: np.ndarray  # (N, n, q)
    theta_hat: np.ndarray  # (N, m)


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology
    schedule: DosSchedule
    exo: Exosystem
    agents: tuple[AgentModel, ...]
    observer: ObserverParams
    controller: ControllerParams
    initial: InitialConditions
    h: float = 1e-3
    horizon: float = 60.0
    seed: int = 0
    c_s: float = 2.0
    settle_threshold: float = 1e-3
    hold: float = 1.0
    reference: dict = field(default_factory=dict)  # published values shown beside ours

    @property
    def N(self) -> int:
        return self.topology.N

    @property
    def n(self) -> int:
        return self.agents[0].n

    @property
    def m(self) -> int:
        return self.agents[0].m

    @property
    def q(self) -> int:
        return self.exo.q

    def validate(self):
        """Dimensional consistency; raises ValueError with the first problem."""
        N, q = self.N, self.q
        if len(self.agents) != N:
            raise ValueError(f"{len(self.agents)} agents declared for a graph with N={N}")
        n, m = self.n, self.m
        for i, a in enumerate(self.agents, 1):
            if (a.n, a.m, a.q) != (n, m, q):
                raise ValueError(f"agent {i} has (n, m, q)=({a.n}, {a.m}, {a.q}), expected ({n}, {m}, {q})")
        if len(self.controller.agents) != N:
            raise ValueError("controller gains must be given for every agent")
        for i, g in enumerate(self.controller.agents, 1):
            if (g.n, g.m) != (n, m):
                raise ValueError(f"controller gains of agent {i} do not match n={n}, m={m}")
        ic = self.initial
        shapes = {"v": (q,), "x": (N, n), "vhat": (N, q), "eps": (N, n, q), "theta_hat": (N, m)}
        for name, shape in shapes.items():
            if np.shape(getattr(ic, name)) != shape:
                raise ValueError(f"initial {name} has shape {np.shape(getattr(ic, name))}, expected {shape}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.hold < self.h:
            raise ValueError("hold window must be at least one step")
        for (i, j) in self.schedule.edges:
            if max(i, j) > N:
                raise ValueError(f"attacked edge ({i}, {j}) names a node beyond N={N}")
            A = self.topology.full_adjacency()
            if A[i, j] == 0:
                raise ValueError(f"attacked edge ({i}, {j}) is not an edge of the graph")

    @property
    def block(self) -> int:
        return self.n + self.n * self.q + self.q + self.m

    def pack(self) -> np.ndarray:
        ic = self.initial
        parts = [np.asarray(ic.v, float)]
        for i in range(self.N):
            parts += [ic.x[i], np.asarray(ic.eps[i]).reshape(-1), ic.vhat[i], ic.theta_hat[i]]
        return np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])


def time_grid(h: float, horizon: float, switches, merge_tol: float = 1e-9) -> np.ndarray:
    """k*h for k = 0..K plus every switch time in (0, horizon).

    A uniform point closer than merge_tol * h to a switch time is replaced
    by the switch time itself.
    """
    K = int(math.floor(horizon / h + 1e-9))
    base = np.arange(K + 1) * h
    if base[-1] < horizon - merge_tol * h:
        base = np.append(base, horizon)
    pts = list(base)
    for s in switches:
        if 0.0 < s < horizon:
            k = int(round(s / h))
            if k < len(base) and abs(base[k] - s) <= merge_tol * h:
                pts[k] = s
            else:
                pts.append(s)
    return np.array(sorted(set(pts)))


def _segment_patterns(sc: Scenario, grid: np.ndarray):
    """Gated adjacency for each step, as indices into a stack of patterns."""
    A = sc.topology.full_adjacency()
    bounds = sorted({0.0, *[t for t in sc.schedule.switch_times() if 0 < t < sc.horizon]})
    patterns, keys, seg_of_bound = [], {}, []
    for b in bounds:
        G = dos.gated_adjacency(sc.schedule, A, b)
        key = G.tobytes()
        if key not in keys:
            keys[key] = len(patterns)
            patterns.append(G)
        seg_of_bound.append(keys[key])
    idx = np.searchsorted(np.array(bounds), grid[:-1], side="right") - 1
    return np.array(seg_of_bound, dtype=np.int64)[idx], np.array(patterns)


@dataclass(frozen=True)
class _Packed:
    fam: np.ndarray
    fpar: np.ndarray
    b: np.ndarray
    R: np.ndarray
    xi: np.ndarray
    theta: np.ndarray
    kap: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    chi: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray
    gam: np.ndarray


def _pack_agents(sc: Scenario) -> _Packed:
    P = max([a.fpar.shape[0] for a in sc.agents] + [1])
    fpar = np.zeros((sc.N, P))
    for i, a in enumerate(sc.agents):
        fpar[i, : a.fpar.shape[0]] = a.fpar
    g = sc.controller.agents
    return _Packed(
        fam=np.array([a.family_id for a in sc.agents], dtype=np.int64),
        fpar=fpar,
        b=np.stack([a.b for a in sc.agents]),
        R=np.stack([a.R for a in sc.agents]),
        xi=np.stack([a.xi for a in sc.agents]),
        theta=np.stack([a.theta for a in sc.agents]),
        kap=np.stack([x.kappa for x in g]),
        eta=np.stack([x.eta for x in g]),
        rho=np.stack([x.rho for x in g]),
        chi=np.stack([x.chi for x in g]),
        zeta1=np.array([x.zeta1 for x in g]),
        zeta2=np.array([x.zeta2 for x in g]),
        gam=np.stack([x.gamma for x in g]),
    )


@njit(cache=True)
def _stiffness(zs, alphas, xi, kap, eta, rho, chi, beta, zeta1, zeta2, gam, th):
    """Local decay rate of the fastest controlled coordinate of one agent.

    For stage s the closed loop contains -(k z^(2 beta - 1) + eta z^3 + rho z
    + 1/2 sum_l xi_l (d alpha_{s-1}/d x_l)^2 z); the derivative of that in z
    bounds the rate. The adaptive law adds Gamma (zeta1 + 3 zeta2 th^2).
    """
    n = zs.shape[0]
    L = 0.0
    for s in range(n):
        z = zs[s, 0]
        r = kap[s] * chi[s] ** (1.5 - 2.0 * beta) * (2 * beta - 1) * abs(z) ** (2 * beta - 2)
        r += 3.0 * eta[s] * z * z + rho[s]
        if s > 0:
            for l in range(s):
                g = alphas[s - 1, 1 + l]
                r += 0.5 * xi[l] * g * g
        if r > L:
            L = r
    gmax = 0.0
    for k in range(gam.shape[0]):
        acc = 0.0
        for r_ in range(gam.shape[1]):
            acc += abs(gam[k, r_])
        if acc > gmax:
            gmax = acc
    tmax = 0.0
    for k in range(th.shape[0]):
        tmax = max(tmax, th[k] * th[k])
    return max(L, gmax * (zeta1 + 3.0 * zeta2 * tmax))


@njit(cache=True)
def _rhs(y, G, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b, R, xi, theta,
         kap, eta, rho, chi, zeta1, zeta2, gam, T, aux):
    """Global derivative; writes u_i into aux[0, i] and z_is into aux[s, i].

    Returns (dy, status, stiff): status is 0 or the 1-based controller stage
    that blew up, stiff the largest controller decay rate over the agents.
    """
    B = n + n * q + q + m
    dy = np.zeros_like(y)
    v = y[:q]
    dy[:q] = S @ v
    VH = np.empty((N, q))
    EPS = np.empty((N, n, q))
    for i in range(N):
        o = q + i * B
        for k in range(n):
            for c in range(q):
                EPS[i, k, c] = y[o + n + k * q + c]
        for c in range(q):
            VH[i, c] = y[o + n + n * q + c]
    dVH, dEPS = observer_rhs_kernel(S, G, v, VH, EPS, opar)
    status = 0
    stiff = 0.0
    for i in range(N):
        o = q + i * B
        for k in range(n):
            for c in range(q):
                dy[o + n + k * q + c] = dEPS[i, k, c]
        for c in range(q):
            dy[o + n + n * q + c] = dVH[i, c]
        if not with_plant:
            aux[:, i] = 0.0
            continue
        x = y[o:o + n].copy()
        th = y[o + n + n * q + q:o + B].copy()
        V = vhat_chain(S, VH[i], EPS[i], opar, n)
        u, alphas, zs, tau_n, phi, st = backstep_kernel(
            x, V, th, fam[i], fpar[i], b[i], R[i], xi[i], kap[i], eta[i], rho[i], chi[i],
            beta, zeta1[i], zeta2[i], gam[i], T)
        if st != 0 and status == 0:
            status = st
        if n > 1:
            stiff = max(stiff, _stiffness(zs, alphas, xi[i], kap[i], eta[i], rho[i], chi[i], beta,
                                          zeta1[i], zeta2[i], gam[i], th))
        aux[0, i] = u
        for s in range(n):
            aux[1 + s, i] = zs[s, 0]
        # plant with the true parameters
        for s in range(n):
            acc = 0.0
            for k in range(m):
                acc += phi[s, k] * theta[i, k]
            for c in range(q):
                acc += b[i, s, c] * v[c]
            acc += x[s + 1] if s < n - 1 else u
            dy[o + s] = acc
        # adaptive law
        inner = tau_n - zeta1[i] * th - zeta2[i] * th ** 3
        dth = gam[i] @ inner
        for k in range(m):
            dy[o + n + n * q + q + k] = dth[k]
    return dy, status, stiff


@njit(cache=True, nogil=True)
def _integrate(y0, grid, pidx, patterns, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b, R, xi,
               theta, kap, eta, rho, chi, zeta1, zeta2, gam, T, c_stab, max_sub):
    """RK4 over the grid. A grid step whose controller decay rate L makes
    h * L exceed c_stab is covered by substeps of length c_stab / L, with L
    re-evaluated at every substep and at every stage; a substep whose stages
    see h * L above 2 c_stab is redone at half length, and no substep is
    more than twice the previous accepted one. The last substep lands on the
    grid point. Returns (Y, AUX, fail index or -1, extra RK4 steps per grid step);
    more than max_sub steps inside one grid step counts as a failure."""
    npts = grid.shape[0]
    Y = np.empty((npts, y0.shape[0]))
    AUX = np.zeros((npts, 1 + n, N))
    Y[0] = y0
    y = y0.copy()
    aux = np.zeros((1 + n, N))
    nsub = np.zeros(npts, dtype=np.int64)
    h_last = np.inf
    for k in range(npts - 1):
        t_end = grid[k + 1]
        t = grid[k]
        G = patterns[pidx[k]]
        first = True
        count = 0
        while True:
            k1, s1, L = _rhs(y, G, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b, R, xi, theta,
                             kap, eta, rho, chi, zeta1, zeta2, gam, T, AUX[k] if first else aux)
            first = False
            h = t_end - t
            if L * h > c_stab:
                h = c_stab / L
            # L at y can badly underestimate the rate a short way along the step,
            # so a step may grow at most twofold over the last accepted one
            if h > 2.0 * h_last:
                h = 2.0 * h_last
            while True:
                # stage rates can jump inside a step (the derivative chain leaving
                # its dead band), so every stage is checked and the step redone
                k2, s2, L2 = _rhs(y + 0.5 * h * k1, G, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b,
                                  R, xi, theta, kap, eta, rho, chi, zeta1, zeta2, gam, T, aux)
                k3, s3, L3 = _rhs(y + 0.5 * h * k2, G, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b,
                                  R, xi, theta, kap, eta, rho, chi, zeta1, zeta2, gam, T, aux)
                k4, s4, L4 = _rhs(y + h * k3, G, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b, R, xi,
                                  theta, kap, eta, rho, chi, zeta1, zeta2, gam, T, aux)
                Lmax = max(L2, L3, L4)
                count += 1
                if count > max_sub:
                    return Y[:k + 1], AUX[:k + 1], k, nsub
                if np.isfinite(Lmax) and Lmax * h <= 2.0 * c_stab:
                    break
                h = 0.5 * h
            h_last = h
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if s1 + s2 + s3 + s4 != 0 or not np.all(np.isfinite(y)):
                return Y[:k + 1], AUX[:k + 1], k, nsub
            t += h
            if t >= t_end or t_end - t <= 1e-12 * max(1.0, abs(t_end)):
                break
        nsub[k + 1] = count - 1
        Y[k + 1] = y
    G = patterns[pidx[npts - 2]]
    _rhs(y, G, S, opar, N, n, q, m, with_plant, beta, fam, fpar, b, R, xi, theta,
         kap, eta, rho, chi, zeta1, zeta2, gam, T, AUX[npts - 1])
    return Y, AUX, -1, nsub


@dataclass
class SimTrace:
    t: np.ndarray
    v: np.ndarray  # (T, q)
    x: np.ndarray  # (T, N, n)
    eps: np.ndarray  # (T, N, n, q)
    vhat: np.ndarray  # (T, N, q)
    theta_hat: np.ndarray  # (T, N, m)
    u: np.ndarray  # (T, N)
    z: np.ndarray  # (T, N, n) backstepping coordinates
    e: np.ndarray  # (T, N)
    vhat_err: np.ndarray  # (T, N)
    attacked: np.ndarray  # (T,) any edge under attack at t
    with_plant: bool = True
    substeps: int = 0  # extra RK4 steps taken inside grid steps

    @property
    def z1(self) -> np.ndarray:
        return self.z[:, :, 0]

    @property
    def final_state(self) -> dict:
        return {"v": self.v[-1], "x": self.x[-1], "vhat": self.vhat[-1], "theta_hat": self.theta_hat[-1]}


def simulate(sc: Scenario, with_plant: bool = True, h: float | None = None,
             horizon: float | None = None) -> SimTrace:
    """Integrate the closed loop; with_plant=False runs the observer alone."""
    if h is not None or horizon is not None:
        sc = replace(sc, h=sc.h if h is None else h, horizon=sc.horizon if horizon is None else horizon)
    sc.validate()
    grid = time_grid(sc.h, sc.horizon, sc.schedule.switch_times())
    pidx, patterns = _segment_patterns(sc, grid)
    pk = _pack_agents(sc)
    tab = jet_tables_for(sc.agents[0])
    N, n, q, m = sc.N, sc.n, sc.q, sc.m
    Y, AUX, fail, nsub = _integrate(sc.pack(), grid, pidx, patterns, np.asarray(sc.exo.S), sc.observer.as_array(),
                                    N, n, q, m, with_plant, int(sc.controller.beta), pk.fam, pk.fpar, pk.b, pk.R,
                                    pk.xi, pk.theta, pk.kap, pk.eta, pk.rho, pk.chi, pk.zeta1, pk.zeta2, pk.gam,
                                    tab.T, C_STAB, MAX_SUBSTEPS)
    if fail >= 0:
        raise NumericalBlowUp(float(grid[fail]))
    tr = _unpack(sc, grid, Y, AUX, with_plant)
    tr.substeps = int(nsub.sum())
    return tr


def simulate_batch(scenarios, with_plant: bool = True, workers: int | None = None) -> list[SimTrace]:
    """Independent runs on a thread pool; the compiled integrator releases the GIL.

    Runs share only the immutable scenarios. Results keep the input order and
    the first failure is re-raised.
    """
    scenarios = list(scenarios)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda sc: simulate(sc, with_plant=with_plant), scenarios))


def _unpack(sc: Scenario, grid, Y, AUX, with_plant: bool) -> SimTrace:
    N, n, q = sc.N, sc.n, sc.q
    B = sc.block
    v = Y[:, :q]
    blocks = Y[:, q:].reshape(len(grid), N, B)
    x = blocks[:, :, :n]
    eps = blocks[:, :, n:n + n * q].reshape(len(grid), N, n, q)
    vhat = blocks[:, :, n + n * q:n + n * q + q]
    th = blocks[:, :, n + n * q + q:]
    R = np.stack([a.R for a in sc.agents])
    e = x[:, :, 0] + np.einsum("tc,ic->ti", v, R)
    err = np.linalg.norm(vhat - v[:, None, :], axis=2)
    union = dos.attacked_union(sc.schedule, 0.0, sc.horizon)
    attacked = np.zeros(len(grid), dtype=bool)
    for a, b_ in union:
        attacked |= (grid >= a) & (grid < b_)
    return SimTrace(grid, v, x.copy(), eps.copy(), vhat.copy(), th.copy(), AUX[:, 0, :].copy(),
                    np.transpose(AUX[:, 1:, :], (0, 2, 1)).copy(), e, err, attacked, with_plant)


def settle_time(t: np.ndarray, signal: np.ndarray, threshold: float, hold: float) -> float | None:
    """First time after which signal stays below threshold, provided the
    tail below threshold lasts at least `hold`; None otherwise."""
    above = np.nonzero(signal >= threshold)[0]
    if len(above) == 0:
        start = 0
    else:
        start = above[-1] + 1
        if start >= len(t):
            return None
    if t[-1] - t[start] < hold:
        return None
    return float(t[start])


@dataclass
class Metrics:
    observer_settling: float | None
    regulation_time: float | None
    peak_u: np.ndarray
    peak_theta_hat: np.ndarray
    t_o: float | None
    t_a: float | None
    residual_radius: float | None

    @property
    def observer_within_bound(self) -> bool | None:
        if self.observer_settling is None or self.t_o is None:
            return None
        return self.observer_settling <= self.t_o

    @property
    def regulation_within_bound(self) -> bool | None:
        if self.regulation_time is None or self.t_a is None:
            return None
        return self.regulation_time <= self.t_a

    def to_dict(self) -> dict:
        return {
            "observer_settling": self.observer_settling,
            "regulation_time": self.regulation_time,
            "peak_u": [float(x) for x in self.peak_u],
            "peak_theta_hat": [float(x) for x in self.peak_theta_hat],
            "t_o": self.t_o,
            "t_a": self.t_a,
            "residual_radius": self.residual_radius,
            "observer_within_bound": self.observer_within_bound,
            "regulation_within_bound": self.regulation_within_bound,
        }


def metrics(tr: SimTrace, t_o: float | None = None, t_a: float | None = None,
            residual_radius: float | None = None, threshold: float = 1e-3, hold: float = 1.0) -> Metrics:
    if hold < float(np.min(np.diff(tr.t))):
        raise ValueError("hold window shorter than one step")
    obs = settle_time(tr.t, tr.vhat_err.max(axis=1), threshold, hold)
    reg = None
    if residual_radius is not None and tr.with_plant:
        reg = settle_time(tr.t, np.abs(tr.e).max(axis=1), residual_radius, hold)
    return Metrics(obs, reg, np.abs(tr.u).max(axis=0), np.linalg.norm(tr.theta_hat, axis=2).max(axis=0),
                   t_o, t_a, residual_radius)


@dataclass
class Comparison:
    fixed_time: SimTrace
    exponential: SimTrace
    checkpoints: list[float]
    fixed_error: list[float]  # sum_i ||vhat_i - v|| at each checkpoint
    exponential_error: list[float]


def compare_observers(sc: Scenario, checkpoints=(1.0, 2.0, 5.0, 10.0), horizon: float | None = None) -> Comparison:
    """Fixed-time observer against its exponential reduction, same data."""
    horizon = sc.horizon if horizon is None else horizon
    fixed = simulate(sc, with_plant=False, horizon=horizon)
    expo = simulate(replace(sc, observer=sc.observer.exponential_reduction()), with_plant=False, horizon=horizon)
    cps = [c for c in checkpoints if c <= horizon]

    def at(tr, c):
        k = int(np.argmin(np.abs(tr.t - c)))
        return float(tr.vhat_err[k].sum())

    return Comparison(fixed, expo, cps, [at(fixed, c) for c in cps], [at(expo, c) for c in cps])
