"""Certificates and bounds: observer constants, the five observer conditions,
settling-time bounds and the controller aggregates behind the residual set.

Margins are signed so that a nonnegative margin means the condition holds
(strictly positive where the inequality is strict).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import AgentGains
from .numkit import Bracket, NoRootError, solve_root_increasing, sym_eig_extrema
from .observer import ObserverParams
from .dos import check_duration_budget
from .plant import validate_exosystem
from .topology import Topology, Variant, h_matrix, leader_globally_reachable

ROOT_BRACKET = Bracket(0.0, 1e4, tol=1e-10)


@dataclass(frozen=True)
class Spectra:
    lam_min_h: float
    lam_min_hbar: float
    lam_min_htilde: float
    lam_max_sym_s: float  # lambda_max(S + S^T)


def spectra(top: Topology, S, a: int, b: int) -> Spectra:
    S = np.asarray(S, dtype=float)
    return Spectra(
        sym_eig_extrema(h_matrix(top))[0],
        sym_eig_extrema(h_matrix(top, a, b, Variant.BAR))[0],
        sym_eig_extrema(h_matrix(top, a, b, Variant.TILDE))[0],
        sym_eig_extrema(S + S.T)[1],
    )


@dataclass(frozen=True)
class Constants:
    c1: float
    c2: float
    c3: float
    c4: float


def constants(sp: Spectra, p: ObserverParams, N: int, q: int, c_s: float) -> Constants:
    a, b = p.a, p.b
    c1 = 2.0 * p.mu1 * sp.lam_min_h - sp.lam_max_sym_s
    c2 = 0.5 * p.mu2 * (4.0 * sp.lam_min_hbar) ** ((a + b) / (2.0 * b))
    c3 = (0.5 * p.mu3 * (2.0 * q * N * N) ** ((a - b) / (2.0 * b))
          * (4.0 * sp.lam_min_htilde) ** ((3.0 * b - a) / (2.0 * b)))
    c4 = max(sp.lam_max_sym_s, c_s)
    return Constants(c1, c2, c3, c4)


def _exp(x: float) -> float:
    """exp that saturates to inf instead of raising; roots are bracketed far out."""
    return math.exp(x) if x < 700.0 else math.inf


def g1(t: float, c: Constants, p_d: float, nu_d: float, a: int, b: int) -> float:
    """Left side of the equation defining t_bar_o; increasing in t when c1(p_d-1) > c4."""
    k = (b - a) * (c.c1 * (p_d - 1.0) - c.c4) / (2.0 * b * p_d)
    off = (c.c1 + c.c4) * (b - a) * nu_d / (2.0 * b)
    return c.c3 * (_exp(k * t - off) - 1.0) - c.c1


def g2_rate(t: float, t_bar: float, c: Constants, p_d: float, nu_d: float, a: int, b: int) -> float:
    """Left side of the equation defining t_tilde_o, the stationarity condition of g2."""
    k = c.c4 * (b - a) / (2.0 * b)
    return c.c4 * (b - a) * _exp(k * ((t - t_bar) / p_d + nu_d)) - c.c2 * (b - a) * (p_d - 1.0)


def g2(t: float, t_bar: float, c: Constants, p_d: float, nu_d: float, a: int, b: int) -> float:
    k = c.c4 * (b - a) / (2.0 * b)
    s = t - t_bar
    return _exp(k * (s / p_d + nu_d)) - c.c2 * (b - a) / (2.0 * b) * (s - s / p_d - nu_d)


def settling_tail(p: ObserverParams, n: int, N: int, q: int) -> float:
    """Time the fractional terms need once the linear phase is over."""
    a, b = p.a, p.b
    return 2.0 * b * n / (b - a) * (1.0 / p.delta2 + 1.0 / (p.delta3 * (N * q) ** ((a - b) / (2.0 * b))))


@dataclass(frozen=True)
class Condition:
    index: int
    ok: bool
    margin: float | None
    text: str


@dataclass(frozen=True)
class SettlingBounds:
    t_bar_o: float | None
    t_tilde_o: float | None
    t_o: float | None
    tail: float


def settling_bounds(c: Constants, p: ObserverParams, p_d: float, nu_d: float, n: int, N: int,
                    q: int) -> SettlingBounds:
    """Roots of the two defining equations plus the fractional tail.

    A root that does not exist (its condition fails) is reported as None.
    """
    a, b = p.a, p.b
    tail = settling_tail(p, n, N, q) if p.delta2 > 0 and p.delta3 > 0 else math.inf
    t_bar = t_tilde = None
    if c.c1 > 0 and c.c1 * (p_d - 1.0) - c.c4 > 0 and c.c3 > 0:
        try:
            t_bar = solve_root_increasing(lambda t: g1(t, c, p_d, nu_d, a, b), ROOT_BRACKET)
        except NoRootError:
            t_bar = None
    if t_bar is not None and c.c2 > 0:
        try:
            t_tilde = solve_root_increasing(lambda t: g2_rate(t, t_bar, c, p_d, nu_d, a, b),
                                            Bracket(t_bar, t_bar + ROOT_BRACKET.hi, tol=ROOT_BRACKET.tol))
        except NoRootError:
            t_tilde = None
    t_o = t_tilde + tail if t_tilde is not None and math.isfinite(tail) else None
    return SettlingBounds(t_bar, t_tilde, t_o, tail)


def check_conditions(sp: Spectra, c: Constants, p: ObserverParams, p_d: float, nu_d: float,
                     sb: SettlingBounds) -> list[Condition]:
    a, b = p.a, p.b
    k = c.c4 * (b - a) / (2.0 * b)
    m1 = 2.0 * p.mu1 * sp.lam_min_h - sp.lam_max_sym_s
    m2 = c.c1 * (p_d - 1.0) - c.c4
    m3 = c.c2 * (p_d - 1.0) - c.c4 * math.exp(k * nu_d)
    if sb.t_bar_o is not None and sb.t_tilde_o is not None:
        m4 = -g2(sb.t_tilde_o, sb.t_bar_o, c, p_d, nu_d, a, b)
    else:
        m4 = None
    m5 = 2.0 * p.delta1 - sp.lam_max_sym_s
    return [
        Condition(1, m1 > 0, m1, "lambda_max(S+S^T) - 2 mu1 lambda_min(H) < 0"),
        Condition(2, m2 > 0, m2, "c1 (p_d - 1) - c4 > 0"),
        Condition(3, m3 > 0, m3, "c4 exp(c4 (b-a) nu_d / 2b) - c2 (p_d - 1) < 0"),
        Condition(4, m4 is not None and m4 >= 0, m4, "g2(t_tilde_o) <= 0"),
        Condition(5, m5 >= 0, m5, "lambda_max(S+S^T) <= 2 delta1"),
    ]


def t_a_from(t_o: float, kappa: float, eta: float, varpi: float, N: int) -> float:
    return t_o + max(4.0 / kappa + N / (eta * (1.0 - varpi)), 4.0 / (kappa * (1.0 - varpi)) + N / eta)


def residual_radius(C: float, kappa: float, eta: float, varpi: float, N: int) -> float:
    return math.sqrt(2.0) * min((N * C / (varpi * eta)) ** 0.25, (C / (varpi * kappa)) ** (2.0 / 3.0))


@dataclass(frozen=True)
class Aggregates:
    kappa: float
    eta: float
    C: float
    residual_radius: float
    kappa_i: tuple[float, ...]
    eta_i: tuple[float, ...]


def controller_aggregates(gains: tuple[AgentGains, ...], thetas, varpi: float) -> Aggregates:
    """kappa, eta, C and the residual radius; C uses the true theta_i."""
    N = len(gains)
    kap_i, eta_i, C = [], [], 0.0
    for g, th in zip(gains, thetas):
        th = np.asarray(th, dtype=float)
        n, m = g.n, g.m
        lam_inv = 1.0 / sym_eig_extrema(g.gamma)[0]  # lambda_max(Gamma^-1)
        kap_i.append(min(float(np.min(g.kappa)), g.zeta1 / lam_inv ** 0.75))
        eps = np.asarray(g.eps_il, dtype=float)
        eta_i.append(min(float(np.min(g.eta)), g.zeta2 * float(np.min(4.0 - 9.0 * eps ** (4.0 / 3.0))) / lam_inv ** 2))
        C += (float(np.sum(g.kappa * g.chi ** 1.5)) + 0.5 * g.zeta1 * float(th @ th) + m * g.zeta1 / 8.0
              + g.zeta2 * float(np.sum((1.0 / 12.0 + 3.0 / (4.0 * eps ** 4)) * th ** 4)))
    n = gains[0].n
    kappa = min(kap_i)
    eta = min(e / (n + 1) for e in eta_i)
    return Aggregates(kappa, eta, C, residual_radius(C, kappa, eta, varpi, N), tuple(kap_i), tuple(eta_i))


def certifying_c_s(sp: Spectra, p: ObserverParams, p_d: float, nu_d: float, n: int, N: int, q: int,
                   grid=np.linspace(0.05, 10.0, 200)) -> tuple[float, float] | None:
    """Smallest and largest c_s on a grid for which all five conditions hold; informational only."""
    ok = []
    for cs in grid:
        c = constants(sp, p, N, q, float(cs))
        sb = settling_bounds(c, p, p_d, nu_d, n, N, q)
        if all(x.ok for x in check_conditions(sp, c, p, p_d, nu_d, sb)):
            ok.append(float(cs))
    return (min(ok), max(ok)) if ok else None


@dataclass
class AnalysisReport:
    spectra: Spectra
    constants: Constants
    conditions: list[Condition]
    bounds: SettlingBounds
    aggregates: Aggregates
    t_a: float | None
    exo_ok: bool
    budget_ok: bool
    budget_worst_margin: float
    budget_worst_t: float
    budget_total_margin: float
    reachable: bool
    inputs: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    c_s_range: tuple[float, float] | None = None

    @property
    def assumptions_ok(self) -> bool:
        return self.exo_ok and self.budget_ok and self.reachable

    @property
    def conditions_ok(self) -> bool:
        return all(c.ok for c in self.conditions)

    @property
    def ok(self) -> bool:
        return self.assumptions_ok and self.conditions_ok

    @property
    def failed_conditions(self) -> list[int]:
        return [c.index for c in self.conditions if not c.ok]

    def values(self) -> dict:
        """Flat name -> value map of every reported quantity."""
        c, b, g = self.constants, self.bounds, self.aggregates
        return {
            "lambda_min_H": self.spectra.lam_min_h, "lambda_max_S_sym": self.spectra.lam_max_sym_s,
            "c1": c.c1, "c2": c.c2, "c3": c.c3, "c4": c.c4,
            "t_bar_o": b.t_bar_o, "t_tilde_o": b.t_tilde_o, "t_o": b.t_o,
            "kappa": g.kappa, "eta": g.eta, "C": g.C, "residual_radius": g.residual_radius, "t_a": self.t_a,
        }

    def reference_deltas(self, rel_tol: float = 1e-3) -> list[tuple[str, float, float | None, bool]]:
        """(name, published, ours, flagged) for every published value we also compute."""
        vals = self.values()
        out = []
        for name, ref in self.reference.items():
            if name not in vals:
                continue
            ours = vals[name]
            flagged = ours is None or abs(ours - ref) > rel_tol * max(1.0, abs(ref))
            out.append((name, float(ref), ours, flagged))
        return out

    def render(self) -> str:
        def f(x):
            return "none" if x is None else f"{x:.6g}"

        lines = ["[analysis]"]
        for k, v in self.values().items():
            lines.append(f"{k} = {f(v)}")
        lines.append("[assumptions]")
        lines.append(f"exosystem = {'ok' if self.exo_ok else 'FAIL'}")
        lines.append(f"leader_reachable = {'ok' if self.reachable else 'FAIL'}")
        lines.append(f"dos_budget = {'ok' if self.budget_ok else 'FAIL'} worst_margin={f(self.budget_worst_margin)}"
                     f" at t={f(self.budget_worst_t)} horizon_margin={f(self.budget_total_margin)}")
        lines.append("[conditions]")
        for c in self.conditions:
            lines.append(f"{c.index}) {'ok' if c.ok else 'FAIL'} margin={f(c.margin)}  {c.text}")
        if self.c_s_range is not None:
            lines.append(f"c_s certifying all conditions on the scan grid: [{self.c_s_range[0]:.4g}, "
                         f"{self.c_s_range[1]:.4g}] (configured c_s = {f(self.inputs.get('c_s'))})")
        if self.reference:
            lines.append("[published]")
            for name, ref, ours, flagged in self.reference_deltas():
                delta = "n/a" if ours is None else f"{ours - ref:+.6g}"
                lines.append(f"{name}: published={ref:.6g} ours={f(ours)} delta={delta}"
                             f"{'  FLAGGED' if flagged else ''}")
        lines.append(f"verdict = {'PASS' if self.ok else 'FAIL'}")
        return "\n".join(lines)


def analyze(sc, scan_c_s: bool = True) -> AnalysisReport:
    """Full certificate for a scenario (an engine.Scenario)."""
    p = sc.observer
    sched = sc.schedule
    sp = spectra(sc.topology, sc.exo.S, p.a, p.b)
    c = constants(sp, p, sc.N, sc.q, sc.c_s)
    sb = settling_bounds(c, p, sched.p_d, sched.nu_d, sc.n, sc.N, sc.q)
    conds = check_conditions(sp, c, p, sched.p_d, sched.nu_d, sb)
    agg = controller_aggregates(sc.controller.agents, [a.theta for a in sc.agents], sc.controller.varpi)
    t_a = t_a_from(sb.t_o, agg.kappa, agg.eta, sc.controller.varpi, sc.N) if sb.t_o is not None else None
    budget = check_duration_budget(sched)
    inputs = {"c_s": sc.c_s, "p_d": sched.p_d, "nu_d": sched.nu_d, "a": p.a, "b": p.b,
              "N": sc.N, "n": sc.n, "q": sc.q, "varpi": sc.controller.varpi}
    rng = certifying_c_s(sp, p, sched.p_d, sched.nu_d, sc.n, sc.N, sc.q) if scan_c_s else None
    return AnalysisReport(sp, c, conds, sb, agg, t_a, validate_exosystem(sc.exo).ok, budget.ok,
                          budget.worst_margin, budget.worst_t, budget.total_margin,
                          leader_globally_reachable(sc.topology), inputs, dict(sc.reference), rng)


def lyapunov_diagnostics(tr) -> dict:
    """U(t) = 1/2 sum_i ||eps_in - v||^2 and the proxy V(t) = 1/2 sum_i sum_s z_is^2.

    The proxy leaves out the parameter-error term, which needs the true theta.
    """
    d = tr.eps[:, :, -1, :] - tr.v[:, None, :]
    U = 0.5 * np.sum(d * d, axis=(1, 2))
    V = 0.5 * np.sum(tr.z * tr.z, axis=(1, 2))
    return {"t": tr.t, "U": U, "V_proxy": V}
