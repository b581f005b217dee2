"""Scenario files: JSON documents with a fixed schema and a canonical layout.

`render` writes numeric lists on one line and everything else indented, so a
file produced by `render` parses and renders back to the same bytes. Gains
keep the form they were written in (scalar, per stage, per agent), and
initial values may be "random(lo,hi)", drawn from the scenario seed.
"""

from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path

import numpy as np

from .controller import AgentGains, ControllerParams
from .dos import DosSchedule
from .engine import InitialConditions, Scenario
from .observer import ObserverParams
from .plant import FAMILIES, AgentModel, Exosystem, manipulator_agent
from .topology import Topology

SECTIONS = ("name", "topology", "dos", "exosystem", "agents", "observer", "controller", "sim")
OPTIONAL = ("reference",)
_RANDOM = re.compile(r"^random\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)$")


class ScenarioError(ValueError):
    """Schema or parse problem, with the dotted path and the line it points at."""

    def __init__(self, msg: str, path: str = "", line: int | None = None):
        self.path, self.line = path, line
        where = path or "document"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {msg}")


# rendering

def _scalar(x) -> str:
    return json.dumps(x)


def _is_numeric_list(x) -> bool:
    if not isinstance(x, list):
        return False
    return all(isinstance(e, (int, float, str)) and not isinstance(e, bool) or _is_numeric_list(e) for e in x)


def _inline(x) -> str:
    if isinstance(x, list):
        return "[" + ", ".join(_inline(e) for e in x) + "]"
    return _scalar(x)


def _render(x, ind: int) -> str:
    pad = "  " * ind
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_render(v, ind + 1)}' for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(x, list):
        if not x or _is_numeric_list(x):
            return _inline(x)
        items = [f"{pad}  {_render(v, ind + 1)}" for v in x]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _scalar(x)


def render(doc: dict) -> str:
    return _render(doc, 0) + "\n"


# parsing helpers

class _Ctx:
    def __init__(self, text: str):
        self.text = text

    def line_of(self, path: str) -> int | None:
        """Line of the last key in a dotted path, searching keys in order."""
        pos = 0
        found = None
        for part in path.split("."):
            key = re.sub(r"\[\d+\]$", "", part)
            k = self.text.find(json.dumps(key), pos)
            if k < 0:
                break
            pos = k
            found = k
        return None if found is None else self.text.count("\n", 0, found) + 1

    def fail(self, path: str, msg: str):
        raise ScenarioError(msg, path, self.line_of(path))


def _get(ctx: _Ctx, d: dict, key: str, path: str, kind=None, default=...):
    if key not in d:
        if default is ...:
            ctx.fail(path, f"missing field {key!r}")
        return default
    v = d[key]
    if kind == "num" and not (isinstance(v, (int, float)) and not isinstance(v, bool)):
        ctx.fail(f"{path}.{key}", f"expected a number, got {v!r}")
    if kind == "int" and not (isinstance(v, int) and not isinstance(v, bool)):
        ctx.fail(f"{path}.{key}", f"expected an integer, got {v!r}")
    if kind == "dict" and not isinstance(v, dict):
        ctx.fail(f"{path}.{key}", "expected an object")
    if kind == "list" and not isinstance(v, list):
        ctx.fail(f"{path}.{key}", "expected a list")
    return v


def _array(ctx: _Ctx, v, path: str, shape: tuple) -> np.ndarray:
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        ctx.fail(path, "expected numbers")
    if a.shape != shape:
        ctx.fail(path, f"expected shape {shape}, got {a.shape}")
    return a


def _broadcast(ctx: _Ctx, v, path: str, N: int, k: int) -> np.ndarray:
    """Scalar, per-component list of length k, or per-agent N x k rows."""
    a = np.array(v, dtype=float) if not isinstance(v, str) else None
    if a is None:
        ctx.fail(path, "expected numbers")
    if a.ndim == 0:
        return np.full((N, k), float(a))
    if a.shape == (k,):
        return np.tile(a, (N, 1))
    if a.shape == (N, k):
        return a
    ctx.fail(path, f"expected a scalar, {k} values or {N} rows of {k}, got shape {a.shape}")


def _initial(ctx: _Ctx, v, path: str, shape: tuple, rng, fallback=None) -> np.ndarray:
    if isinstance(v, str):
        m = _RANDOM.match(v.strip())
        if m:
            lo, hi = float(m.group(1)), float(m.group(2))
            if not lo < hi:
                ctx.fail(path, "random(lo,hi) needs lo < hi")
            return rng.uniform(lo, hi, size=shape)
        if v == "zeros":
            return np.zeros(shape)
        if fallback is not None and v in fallback:
            return fallback[v]
        ctx.fail(path, f"unknown initial value form {v!r}")
    return _array(ctx, v, path, shape)


# document -> Scenario

def build(doc: dict, text: str = "", seed: int | None = None) -> Scenario:
    ctx = _Ctx(text)
    if not isinstance(doc, dict):
        ctx.fail("", "top level must be an object")
    for k in doc:
        if k not in SECTIONS and k not in OPTIONAL:
            ctx.fail(k, f"unknown section {k!r}")
    for k in SECTIONS:
        _get(ctx, doc, k, "")

    t = _get(ctx, doc, "topology", "", "dict")
    N = _get(ctx, t, "N", "topology", "int")
    if N < 1:
        ctx.fail("topology.N", "need at least one agent")
    try:
        top = Topology.from_edges(N, [tuple(e) for e in _get(ctx, t, "edges", "topology", "list")],
                                  _get(ctx, t, "leader_links", "topology", "list"))
    except (ValueError, TypeError) as exc:
        ctx.fail("topology.edges", str(exc))

    e = _get(ctx, doc, "exosystem", "", "dict")
    S = np.array(_get(ctx, e, "S", "exosystem", "list"), dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        ctx.fail("exosystem.S", "S must be a square matrix")
    exo = Exosystem(S)
    q = exo.q

    agents = []
    for i, a in enumerate(_get(ctx, doc, "agents", "", "list")):
        path = f"agents[{i}]"
        if not isinstance(a, dict):
            ctx.fail(path, "expected an object")
        fam = _get(ctx, a, "family", path)
        if fam not in FAMILIES:
            ctx.fail(f"{path}.family", f"unknown family {fam!r}; known: {sorted(FAMILIES)}")
        try:
            if fam == "manipulator":
                ag = manipulator_agent(_get(ctx, a, "index", path, "int"))
            else:
                ag = AgentModel(fam, _get(ctx, a, "theta", path, "list"), _get(ctx, a, "b", path, "list"),
                                _get(ctx, a, "R", path, "list"), a.get("params", []))
        except ValueError as exc:
            ctx.fail(path, str(exc))
        if ag.q != q:
            ctx.fail(path, f"b and R must have {q} columns to match S")
        agents.append(ag)
    if len(agents) != N:
        ctx.fail("agents", f"expected {N} agents, got {len(agents)}")
    n, m = agents[0].n, agents[0].m
    for i, ag in enumerate(agents):
        if (ag.n, ag.m) != (n, m):
            ctx.fail(f"agents[{i}]", "all agents must share n and m")

    sim = _get(ctx, doc, "sim", "", "dict")
    h = float(_get(ctx, sim, "h", "sim", "num"))
    horizon = float(_get(ctx, sim, "horizon", "sim", "num"))
    if not h > 0:
        ctx.fail("sim.h", "h must be positive")
    if not horizon > 0:
        ctx.fail("sim.horizon", "horizon must be positive")

    d = _get(ctx, doc, "dos", "", "dict")
    edges = {}
    for k, ed in enumerate(_get(ctx, d, "edges", "dos", "list")):
        path = f"dos.edges[{k}]"
        if not isinstance(ed, dict):
            ctx.fail(path, "expected an object with i, j, intervals")
        i_, j_ = _get(ctx, ed, "i", path, "int"), _get(ctx, ed, "j", path, "int")
        inside = 0 <= min(i_, j_) and max(i_, j_) <= N
        if not inside or top.full_adjacency()[i_, j_] == 0:
            ctx.fail(path, f"({i_}, {j_}) is not an edge of the graph")
        edges[(i_, j_)] = [tuple(iv) for iv in _get(ctx, ed, "intervals", path, "list")]
    try:
        sched = DosSchedule(edges, float(_get(ctx, d, "p_d", "dos", "num")),
                            float(_get(ctx, d, "nu_d", "dos", "num")), float(_get(ctx, d, "horizon", "dos", "num")))
    except (ValueError, TypeError) as exc:
        ctx.fail("dos", str(exc))
    if horizon > sched.horizon:
        ctx.fail("sim.horizon", f"simulation horizon {horizon} exceeds the schedule horizon {sched.horizon}")

    o = _get(ctx, doc, "observer", "", "dict")
    delta = _array(ctx, _get(ctx, o, "delta", "observer"), "observer.delta", (3,))
    mu = _array(ctx, _get(ctx, o, "mu", "observer"), "observer.mu", (3,))
    for name, arr in (("delta", delta), ("mu", mu)):
        if np.any(arr < 0):
            ctx.fail(f"observer.{name}", "observer gains must be nonnegative")
    if delta[0] <= 0:
        ctx.fail("observer.delta", "delta1 must be positive")
    try:
        obs = ObserverParams(*delta, *mu, _get(ctx, o, "a", "observer", "int"), _get(ctx, o, "b", "observer", "int"),
                             float(o.get("eps_sing", 1e-2)))
    except ValueError as exc:
        ctx.fail("observer", str(exc))

    c = _get(ctx, doc, "controller", "", "dict")
    beta = _get(ctx, c, "beta", "controller", "int")
    per_stage = {k: _broadcast(ctx, _get(ctx, c, k, "controller"), f"controller.{k}", N, n)
                 for k in ("kappa", "eta", "rho", "chi")}
    zeta1 = _broadcast(ctx, _get(ctx, c, "zeta1", "controller"), "controller.zeta1", N, 1)[:, 0]
    zeta2 = _broadcast(ctx, _get(ctx, c, "zeta2", "controller"), "controller.zeta2", N, 1)[:, 0]
    gdiag = _broadcast(ctx, _get(ctx, c, "gamma", "controller"), "controller.gamma", N, m)
    eps_il = _broadcast(ctx, _get(ctx, c, "eps_il", "controller"), "controller.eps_il", N, m)
    gains = []
    for i in range(N):
        try:
            gains.append(AgentGains(per_stage["kappa"][i], per_stage["eta"][i], per_stage["rho"][i],
                                    per_stage["chi"][i], float(zeta1[i]), float(zeta2[i]), np.diag(gdiag[i]),
                                    eps_il[i]))
        except ValueError as exc:
            ctx.fail("controller", f"agent {i + 1}: {exc}")
    try:
        ctrl = ControllerParams(beta, tuple(gains), float(c.get("varpi", 0.5)))
    except ValueError as exc:
        ctx.fail("controller", str(exc))

    seed_ = _get(ctx, sim, "seed", "sim", "int", 0) if seed is None else seed
    rng = np.random.default_rng(seed_)
    ini = _get(ctx, sim, "initial", "sim", "dict")
    v0 = _initial(ctx, _get(ctx, ini, "v", "sim.initial"), "sim.initial.v", (q,), rng)
    x0 = _initial(ctx, _get(ctx, ini, "x", "sim.initial"), "sim.initial.x", (N, n), rng)
    vh0 = _initial(ctx, _get(ctx, ini, "vhat", "sim.initial"), "sim.initial.vhat", (N, q), rng)
    eps0 = _initial(ctx, ini.get("eps", "vhat"), "sim.initial.eps", (N, n, q), rng,
                    {"vhat": np.repeat(vh0[:, None, :], n, axis=1)})
    th0 = _initial(ctx, ini.get("theta_hat", "zeros"), "sim.initial.theta_hat", (N, m), rng)

    ref = doc.get("reference", {})
    if not isinstance(ref, dict) or not all(isinstance(v, (int, float)) for v in ref.values()):
        ctx.fail("reference", "expected an object of published numbers")

    name = _get(ctx, doc, "name", "")
    sc = Scenario(str(name), top, sched, exo, tuple(agents), obs, ctrl,
                  InitialConditions(v0, x0, vh0, eps0, th0), h, horizon, int(seed_),
                  float(sim.get("c_s", 2.0)), float(sim.get("settle_threshold", 1e-3)), float(sim.get("hold", 1.0)),
                  {k: float(v) for k, v in ref.items()})
    try:
        sc.validate()
    except ValueError as exc:
        ctx.fail("sim", str(exc))
    return sc


def parse(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, "", exc.lineno) from None
    return doc


def load(path: str | Path, seed: int | None = None) -> tuple[Scenario, dict]:
    """(Scenario, raw document); `paper` or `paper-random` name the shipped files."""
    text = read_text(path)
    doc = parse(text)
    return build(doc, text, seed), doc


def read_text(path: str | Path) -> str:
    p = Path(path)
    if not p.exists() and str(path) in builtin_names():
        return resources.files("fxtcor").joinpath("data", f"{path}.scenario").read_text()
    try:
        return p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read file: {exc.strerror}", str(path)) from None


def builtin_names() -> list[str]:
    return sorted(f.name.removesuffix(".scenario") for f in resources.files("fxtcor").joinpath("data").iterdir()
                  if f.name.endswith(".scenario"))


def schedule_fragment(s: DosSchedule) -> dict:
    """The dos section for a schedule, as written into scenario files."""
    return {
        "p_d": s.p_d,
        "nu_d": s.nu_d,
        "horizon": s.horizon,
        "edges": [{"i": i, "j": j, "intervals": [list(iv) for iv in ivs]} for (i, j), ivs in s.edges.items()],
    }
