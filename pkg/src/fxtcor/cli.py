"""Command-line front end: verify, simulate, compare-observers, attack-gen.

Exit codes: 0 success, 1 a condition or assumption fails, 2 input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, dos, engine, scenario
from .numkit import NumericalBlowUp

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

# (pattern, meaning); <i> is the agent 1..N, <s> the stage 1..n, <c> the
# exosystem component 1..q and <k> the parameter index 1..m
TRACE_COLUMNS = (
    ("t", "time [s]"),
    ("attacked", "1 while any edge is under attack"),
    ("v<c>", "exosystem state"),
    ("x<i>_<s>", "plant state"),
    ("eps<i>_<s>_<c>", "observer chain state"),
    ("vhat<i>_<c>", "leader state estimate"),
    ("theta_hat<i>_<k>", "parameter estimate"),
    ("u<i>", "control input"),
    ("e<i>", "regulated output"),
    ("z<i>_<s>", "backstepping error coordinate"),
    ("vhat_err<i>", "estimation error norm"),
)


def trace_header(N: int, n: int, q: int, m: int) -> list[str]:
    """Column names of trace.csv, in file order."""
    cols = ["t", "attacked"] + [f"v{c}" for c in range(1, q + 1)]
    rng = range(1, N + 1)
    cols += [f"x{i}_{s}" for i in rng for s in range(1, n + 1)]
    cols += [f"eps{i}_{s}_{c}" for i in rng for s in range(1, n + 1) for c in range(1, q + 1)]
    cols += [f"vhat{i}_{c}" for i in rng for c in range(1, q + 1)]
    cols += [f"theta_hat{i}_{k}" for i in rng for k in range(1, m + 1)]
    cols += [f"u{i}" for i in rng] + [f"e{i}" for i in rng]
    cols += [f"z{i}_{s}" for i in rng for s in range(1, n + 1)]
    cols += [f"vhat_err{i}" for i in rng]
    return cols


def trace_matrix(tr: engine.SimTrace) -> np.ndarray:
    T = len(tr.t)
    parts = [tr.t[:, None], tr.attacked[:, None].astype(float), tr.v, tr.x.reshape(T, -1),
             tr.eps.reshape(T, -1), tr.vhat.reshape(T, -1), tr.theta_hat.reshape(T, -1), tr.u, tr.e,
             tr.z.reshape(T, -1), tr.vhat_err]
    return np.hstack(parts)


def write_trace(tr: engine.SimTrace, path: Path):
    N, n = tr.x.shape[1:]
    header = trace_header(N, n, tr.v.shape[1], tr.theta_hat.shape[2])
    np.savetxt(path, trace_matrix(tr), delimiter=",", header=",".join(header), comments="", fmt="%.12g")


def _columns_help() -> str:
    w = max(len(p) for p, _ in TRACE_COLUMNS)
    rows = "\n".join(f"  {p.ljust(w)}  {d}" for p, d in TRACE_COLUMNS)
    return ("trace.csv columns (<i> agent 1..N, <s> stage 1..n, <c> exosystem component 1..q,\n"
            "<k> parameter index 1..m):\n" + rows)


def _load(path: str, seed: int | None = None) -> engine.Scenario:
    sc, _ = scenario.load(path, seed)
    return sc


def _metrics_block(m: engine.Metrics, tr: engine.SimTrace) -> str:
    def f(x):
        return "none" if x is None else f"{x:.6g}"

    lines = ["[metrics]",
             f"observer_settling = {f(m.observer_settling)}",
             f"regulation_time = {f(m.regulation_time)}",
             f"peak_u = {' '.join(f'{x:.6g}' for x in m.peak_u)}",
             f"peak_theta_hat = {' '.join(f'{x:.6g}' for x in m.peak_theta_hat)}",
             f"observer_within_bound = {m.observer_within_bound}",
             f"regulation_within_bound = {m.regulation_within_bound}",
             f"terminal_vhat_err = {f(float(tr.vhat_err[-1].max()))}",
             f"terminal_abs_e = {f(float(np.abs(tr.e[-1]).max()))}",
             f"substeps = {tr.substeps}"]
    return "\n".join(lines)


def cmd_verify(args) -> int:
    sc = _load(args.scenario)
    rep = analysis.analyze(sc)
    print(rep.render())
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_simulate(args) -> int:
    sc = _load(args.scenario, args.seed)
    rep = analysis.analyze(sc, scan_c_s=False)
    if not rep.ok and not args.force:
        print(rep.render())
        print("certificate fails; rerun with --force to simulate anyway", file=sys.stderr)
        return EXIT_FAIL
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tr = engine.simulate(sc, h=args.h, horizon=args.horizon)
    rr = rep.aggregates.residual_radius
    m = engine.metrics(tr, rep.bounds.t_o, rep.t_a, rr, sc.settle_threshold, sc.hold)
    write_trace(tr, out / "trace.csv")
    summary = _metrics_block(m, tr) + "\n" + rep.render() + "\n"
    (out / "summary.txt").write_text(summary)
    (out / "metrics.json").write_text(json.dumps(m.to_dict(), indent=2) + "\n")
    if args.plots:
        from .plotting import run_figures
        run_figures(tr, out, rr)
    print(summary, end="")
    return EXIT_OK


def cmd_compare_observers(args) -> int:
    sc = _load(args.scenario, args.seed)
    cmp = engine.compare_observers(sc, tuple(args.checkpoints), horizon=args.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["t,fixed_time,exponential"]
    rows += [f"{c:g},{a:.12g},{b:.12g}" for c, a, b in zip(cmp.checkpoints, cmp.fixed_error, cmp.exponential_error)]
    (out / "comparison.csv").write_text("\n".join(rows) + "\n")
    from .plotting import comparison_figures
    comparison_figures(cmp, out)
    print("\n".join(rows))
    return EXIT_OK


def cmd_attack_gen(args) -> int:
    sc = _load(args.scenario)
    top = sc.topology
    edges = [(i + 1, j + 1) for i in range(top.N) for j in range(i + 1, top.N) if top.a[i, j] > 0]
    edges += [(i + 1, 0) for i in range(top.N) if top.a0[i] > 0]
    try:
        s = dos.generate_schedule(args.seed, edges, args.p_d, args.nu_d, args.horizon,
                                  args.mean_on, args.mean_off)
    except dos.InfeasibleSchedule as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = scenario.render({"dos": scenario.schedule_fragment(s)})
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fxtcor", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    hint = "scenario file, or a shipped name: " + ", ".join(scenario.builtin_names())

    v = sub.add_parser("verify", help="check assumptions and conditions of a scenario")
    v.add_argument("scenario", help=hint)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="run the closed loop and write trace.csv and a summary",
                       epilog=_columns_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("scenario", help=hint)
    s.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    s.add_argument("--h", type=float, default=None, help="step size, overriding the scenario")
    s.add_argument("--horizon", type=float, default=None, help="horizon, overriding the scenario")
    s.add_argument("--seed", type=int, default=None, help="seed for random(lo,hi) initial conditions")
    s.add_argument("--plots", action="store_true", help="also write the four SVG figures")
    s.add_argument("--force", action="store_true", help="simulate even if the certificate fails")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare-observers", help="fixed-time observer against its exponential reduction")
    c.add_argument("scenario", help=hint)
    c.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    c.add_argument("--horizon", type=float, default=None, help="horizon, overriding the scenario")
    c.add_argument("--seed", type=int, default=None, help="seed for random(lo,hi) initial conditions")
    c.add_argument("--checkpoints", type=float, nargs="+", default=[1.0, 2.0, 5.0, 10.0],
                   help="times at which summed errors are reported")
    c.set_defaults(func=cmd_compare_observers)

    a = sub.add_parser("attack-gen", help="random DoS schedule within the duration budget")
    a.add_argument("--scenario", default="paper", help="scenario whose edges are attacked (default: %(default)s)")
    a.add_argument("--p-d", type=float, required=True, help="budget ratio, > 1")
    a.add_argument("--nu-d", type=float, required=True, help="budget offset [s], >= 0")
    a.add_argument("--horizon", type=float, required=True, help="schedule horizon [s]")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--mean-on", type=float, default=0.2, help="mean attack length [s]")
    a.add_argument("--mean-off", type=float, default=2.0, help="mean gap between attacks [s]")
    a.add_argument("--out", default=None, help="write the fragment here instead of stdout")
    a.set_defaults(func=cmd_attack_gen)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except scenario.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalBlowUp as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
