"""SVG figures of a run, rendered with matplotlib's Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .engine import Comparison, SimTrace  # noqa: E402


def _shade_attacks(ax, tr: SimTrace):
    on = tr.attacked
    if not on.any():
        return
    edges = np.flatnonzero(np.diff(np.r_[0, on.astype(int), 0]))
    for s, e in zip(edges[::2], edges[1::2]):
        ax.axvspan(tr.t[s], tr.t[min(e, len(tr.t) - 1)], color="0.9", lw=0)


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _per_agent(tr: SimTrace, series: np.ndarray, ylabel: str, path: Path, log: bool = False, hline=None):
    fig, ax = plt.subplots(figsize=(7, 3.6))
    _shade_attacks(ax, tr)
    for i in range(series.shape[1]):
        ax.plot(tr.t, series[:, i], lw=1.0, label=f"agent {i + 1}")
    if hline is not None:
        for y in np.atleast_1d(hline):
            ax.axhline(y, color="k", ls="--", lw=0.8)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel("t [s]")
    ax.set_ylabel(ylabel)
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    _save(fig, path)


def run_figures(tr: SimTrace, out: str | Path, residual_radius: float | None = None) -> list[Path]:
    """estimation-errors, regulated-outputs, theta-hat and control-signals SVGs."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / n for n in ("estimation-errors.svg", "regulated-outputs.svg", "theta-hat.svg",
                               "control-signals.svg")]
    _per_agent(tr, np.maximum(tr.vhat_err, 1e-16), r"$\|\hat v_i - v\|$", paths[0], log=True)
    band = None if residual_radius is None else [residual_radius, -residual_radius]
    _per_agent(tr, tr.e, r"$e_i$", paths[1], hline=band)
    _per_agent(tr, np.linalg.norm(tr.theta_hat, axis=2), r"$\|\hat\theta_i\|$", paths[2])
    _per_agent(tr, tr.u, r"$u_i$", paths[3])
    return paths


def comparison_figures(cmp: Comparison, out: str | Path) -> list[Path]:
    """Estimation errors of the fixed-time observer beside its exponential reduction."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "observer-fixed-time.svg", out / "observer-exponential.svg"]
    for tr, p in zip((cmp.fixed_time, cmp.exponential), paths):
        _per_agent(tr, np.maximum(tr.vhat_err, 1e-16), r"$\|\hat v_i - v\|$", p, log=True)
    return paths
