"""Denial-of-service schedules on graph edges and the attack-duration budget."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Interval = tuple[float, float]


def edge_key(i: int, j: int) -> tuple[int, int]:
    """Undirected edge key, smaller node first. Node 0 is the leader."""
    return (i, j) if i <= j else (j, i)


def merge_intervals(intervals) -> list[Interval]:
    """Sorted disjoint union of half-open intervals; touching intervals merge."""
    out: list[list[float]] = []
    for s, e in sorted((float(s), float(e)) for s, e in intervals if e > s):
        if out and s <= out[-1][1]:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [(s, e) for s, e in out]


def total_length(intervals) -> float:
    return math.fsum(e - s for s, e in intervals)


@dataclass(frozen=True)
class DosSchedule:
    """Per-edge attack intervals [start, end) plus the duration budget (p_d, nu_d)."""

    edges: dict[tuple[int, int], tuple[Interval, ...]]
    p_d: float
    nu_d: float
    horizon: float
    _union: tuple[Interval, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.p_d > 1:
            raise ValueError(f"p_d must exceed 1, got {self.p_d}")
        if not self.nu_d > 0:
            raise ValueError(f"nu_d must be positive, got {self.nu_d}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        edges: dict[tuple[int, int], tuple[Interval, ...]] = {}
        for (i, j), ivs in self.edges.items():
            if i == j or i < 0 or j < 0:
                raise ValueError(f"bad edge ({i}, {j})")
            key = edge_key(i, j)
            if key in edges:
                raise ValueError(f"edge {key} listed twice")
            ivs = tuple((float(s), float(e)) for s, e in ivs)
            prev_end = -math.inf
            for s, e in ivs:
                if not (0 <= s < e <= self.horizon):
                    raise ValueError(f"interval [{s}, {e}) on edge {key} is empty or outside [0, {self.horizon}]")
                if s < prev_end:
                    raise ValueError(f"intervals on edge {key} must be sorted and disjoint")
                prev_end = e
            edges[key] = ivs
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_union", tuple(merge_intervals(iv for ivs in edges.values() for iv in ivs)))

    @classmethod
    def empty(cls, p_d: float, nu_d: float, horizon: float) -> "DosSchedule":
        return cls({}, p_d, nu_d, horizon)

    def switch_times(self) -> list[float]:
        """Every interval endpoint on any edge, sorted and deduplicated."""
        return sorted({t for ivs in self.edges.values() for iv in ivs for t in iv})


def sigma(s: DosSchedule, i: int, j: int, t: float) -> int:
    """0 while edge (i, j) is attacked at time t, else 1. Unknown edges are never attacked."""
    for start, end in s.edges.get(edge_key(i, j), ()):
        if start <= t < end:
            return 0
        if start > t:
            break
    return 1


def gated_adjacency(s: DosSchedule, A: np.ndarray, t: float) -> np.ndarray:
    """a_ij * sigma_ij(t) for the (N+1) x (N+1) leader-augmented adjacency."""
    G = np.array(A, dtype=float)
    for (i, j) in s.edges:
        if i < G.shape[0] and j < G.shape[0] and sigma(s, i, j, t) == 0:
            G[i, j] = G[j, i] = 0.0
    return G


def attacked_union(s: DosSchedule, t0: float, t: float) -> list[Interval]:
    """Union of all edges' attack intervals clipped to [t0, t]."""
    out = []
    for a, b in s._union:
        lo, hi = max(a, t0), min(b, t)
        if hi > lo:
            out.append((lo, hi))
    return out


def attacked_length(s: DosSchedule, t: float, t0: float = 0.0) -> float:
    return total_length(attacked_union(s, t0, t))


def _worst_margin(union, p_d: float, nu_d: float) -> tuple[float, float]:
    worst_t, worst = 0.0, nu_d
    acc = 0.0
    for a, b in union:
        acc += b - a
        m = b / p_d + nu_d - acc
        if m < worst:
            worst_t, worst = b, m
    return worst, worst_t


@dataclass(frozen=True)
class BudgetReport:
    ok: bool
    worst_margin: float
    worst_t: float
    total_margin: float  # budget minus attacked time over the whole horizon


def check_duration_budget(s: DosSchedule) -> BudgetReport:
    """Check |Psi_D(0, t)| <= t / p_d + nu_d for every t in [0, horizon].

    The margin t / p_d + nu_d - |Psi_D(0, t)| has slope 1/p_d - 1 < 0 inside
    attacked stretches and slope 1/p_d > 0 between them, so its minimum is at
    t = 0 or at the right end of an attacked stretch of the union.
    """
    worst, worst_t = _worst_margin(s._union, s.p_d, s.nu_d)
    total_margin = s.horizon / s.p_d + s.nu_d - total_length(s._union)
    return BudgetReport(ok=worst >= 0.0, worst_margin=worst, worst_t=worst_t, total_margin=total_margin)


class InfeasibleSchedule(ValueError):
    """The generator could not place any attack within the budget."""


def _max_feasible_end(union: list[Interval], start: float, end: float, p_d: float, nu_d: float) -> float:
    """Largest e in [start, end] such that adding [start, e) keeps the budget."""

    def fits(e: float) -> bool:
        return _worst_margin(merge_intervals(union + [(start, e)]), p_d, nu_d)[0] >= 0.0

    if fits(end):
        return end
    lo, hi = start, end
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _shrink_to_grid(s: float, e: float, q: float = 1e6) -> Interval:
    return math.ceil(s * q) / q, math.floor(e * q) / q


def generate_schedule(seed: int, edges, p_d: float, nu_d: float, horizon: float,
                      mean_on: float, mean_off: float, min_len: float = 1e-3,
                      max_retries: int = 20) -> DosSchedule:
    """Random on/off attacks per edge, truncated to respect the global budget.

    `edges` is an iterable of undirected (i, j) pairs (0 = leader). Off and
    on durations are exponential with the given means. An attack that would
    break the budget is shortened to the longest length that fits and
    dropped if that is shorter than `min_len`.
    """
    if not p_d > 1:
        raise ValueError("p_d must exceed 1")
    if mean_on < 0 or not mean_off > 0:
        raise ValueError("mean_on must be >= 0 and mean_off > 0")
    keys = sorted({edge_key(i, j) for i, j in edges})
    if mean_on == 0 or not keys:
        return DosSchedule({k: () for k in keys}, p_d, nu_d, horizon)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        union: list[Interval] = []
        per_edge: dict[tuple[int, int], list[Interval]] = {k: [] for k in keys}
        for k in keys:
            t = 0.0
            while True:
                t += rng.exponential(mean_off)
                if t >= horizon:
                    break
                end = min(t + rng.exponential(mean_on), horizon)
                end = _max_feasible_end(union, t, end, p_d, nu_d)
                if end - t >= min_len:
                    per_edge[k].append((t, end))
                    union = merge_intervals(union + [(t, end)])
                t = end
        if any(per_edge.values()):
            # round to microseconds so the schedule renders compactly
            clean = {k: tuple(iv for iv in (_shrink_to_grid(s, e) for s, e in v) if iv[1] > iv[0])
                     for k, v in per_edge.items()}
            sched = DosSchedule(clean, p_d, nu_d, horizon)
            if check_duration_budget(sched).ok:
                return sched
    raise InfeasibleSchedule(f"no attack fits the budget after {max_retries} attempts")
