import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fxtcor import dos
from fxtcor.dos import DosSchedule, InfeasibleSchedule

PAPER_EDGES = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (1, 4)]


def dense_budget_ok(union, p_d, nu_d, horizon, step=1e-4):
    """Independent oracle: attacked time on a fine grid against the budget line."""
    t = np.arange(0.0, horizon + step / 2, step)
    covered = np.zeros_like(t, dtype=bool)
    for a, b in union:
        covered |= (t >= a) & (t < b)
    # attacked length up to t from cell midpoints, plus exact checks at the union end points
    length = np.concatenate([[0.0], np.cumsum(covered[:-1]) * step])
    ok = np.all(length <= t / p_d + nu_d + 2 * step)
    for a, b in union:
        acc = sum(min(e, b) - s for s, e in union if s < b)
        ok &= acc <= b / p_d + nu_d + 1e-12
    return bool(ok)


def test_table_union_length(paper):
    union = dos.attacked_union(paper.schedule, 0.0, 20.0)
    assert dos.total_length(union) == pytest.approx(4.92, abs=1e-9)
    assert union[0] == (0.01, 0.5) and union[-1] == (8.0, 8.2)


def test_table_budget_is_violated_pointwise(paper):
    # [0.01, 5.2) holds 4.52 s of attack against a budget of 5.2/4 + 0.1 = 1.4 s
    rep = dos.check_duration_budget(paper.schedule)
    assert not rep.ok
    assert rep.worst_t == 5.2
    assert rep.worst_margin == pytest.approx(5.2 / 4 + 0.1 - 4.52, abs=1e-12)
    short = DosSchedule(paper.schedule.edges, 4.0, 0.1, 20.0)
    assert dos.check_duration_budget(short).total_margin == pytest.approx(20 / 4 + 0.1 - 4.92, abs=1e-12)


def test_single_interval_counterexample():
    s = DosSchedule({(0, 1): ((0.0, 1.0),)}, 4.0, 0.1, 20.0)
    rep = dos.check_duration_budget(s)
    assert not rep.ok and rep.worst_t == 1.0
    assert rep.worst_margin == pytest.approx(0.25 + 0.1 - 1.0)


def test_empty_schedule_is_within_budget():
    rep = dos.check_duration_budget(DosSchedule.empty(4.0, 0.1, 20.0))
    assert rep.ok and rep.worst_margin == 0.1


@st.composite
def schedules(draw):
    horizon = 20.0
    edges = {}
    for key in draw(st.lists(st.sampled_from(PAPER_EDGES), unique=True, max_size=4)):
        cuts = sorted(draw(st.lists(st.floats(0, horizon), min_size=2, max_size=8, unique=True)))
        ivs = [(cuts[k], cuts[k + 1]) for k in range(0, len(cuts) - 1, 2) if cuts[k + 1] > cuts[k]]
        edges[key] = tuple(ivs)
    p_d = draw(st.floats(1.05, 10.0))
    nu_d = draw(st.floats(0.01, 3.0))
    return DosSchedule(edges, p_d, nu_d, horizon)


@given(schedules())
def test_budget_check_agrees_with_dense_grid(s):
    rep = dos.check_duration_budget(s)
    union = dos.attacked_union(s, 0.0, s.horizon)
    if abs(rep.worst_margin) > 1e-3:
        assert rep.ok == dense_budget_ok(union, s.p_d, s.nu_d, s.horizon)


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), max_size=12))
def test_merge_is_disjoint_and_length_preserving(raw):
    ivs = [(min(a, b), max(a, b)) for a, b in raw]
    merged = dos.merge_intervals(ivs)
    assert all(e > s for s, e in merged)
    assert all(merged[k][1] < merged[k + 1][0] for k in range(len(merged) - 1))
    grid = np.linspace(0, 10, 2001)
    cov_raw = np.zeros_like(grid, dtype=bool)
    cov_m = np.zeros_like(grid, dtype=bool)
    for s, e in ivs:
        cov_raw |= (grid >= s) & (grid < e)
    for s, e in merged:
        cov_m |= (grid >= s) & (grid < e)
    assert np.array_equal(cov_raw, cov_m)
    assert dos.total_length(merged) <= dos.total_length(ivs) + 1e-12


def test_sigma_is_symmetric_and_half_open(paper):
    s = paper.schedule
    assert dos.sigma(s, 1, 0, 0.55) == 0 and dos.sigma(s, 0, 1, 0.55) == 0
    assert dos.sigma(s, 1, 0, 1.2) == 1
    assert dos.sigma(s, 1, 0, 0.5499999) == 1
    assert dos.sigma(s, 2, 4, 1.0) == 1  # not an edge of the schedule


def test_gated_adjacency_zeroes_attacked_links(paper):
    A = paper.topology.full_adjacency()
    G = dos.gated_adjacency(paper.schedule, A, 0.3)
    # at t = 0.3 only the link between the leader and agent 1 is up
    expected = np.zeros_like(A)
    expected[0, 1] = expected[1, 0] = 1.0
    assert np.array_equal(G, expected)
    assert np.allclose(G, G.T)
    assert np.array_equal(dos.gated_adjacency(paper.schedule, A, 10.0), A)


def test_switch_times_sorted_unique(paper):
    sw = paper.schedule.switch_times()
    assert sw == sorted(set(sw)) and 0.01 in sw and 8.2 in sw


@pytest.mark.parametrize("kw", [
    dict(edges={(0, 1): ((1.0, 0.5),)}),
    dict(edges={(0, 1): ((0.0, 30.0),)}),
    dict(edges={(0, 1): ((0.0, 2.0), (1.0, 3.0))}),
    dict(edges={(1, 1): ()}),
    dict(edges={(0, 1): (), (1, 0): ()}),
    dict(p_d=1.0),
    dict(nu_d=0.0),
])
def test_invalid_schedules(kw):
    args = dict(edges={}, p_d=4.0, nu_d=0.1, horizon=20.0) | kw
    with pytest.raises(ValueError):
        DosSchedule(**args)


@given(st.integers(0, 10_000), st.floats(1.5, 6.0), st.floats(0.05, 2.0))
def test_generator_respects_budget(seed, p_d, nu_d):
    try:
        s = dos.generate_schedule(seed, PAPER_EDGES, p_d, nu_d, 20.0, 0.3, 1.5)
    except InfeasibleSchedule:
        return
    assert dos.check_duration_budget(s).ok
    assert set(s.edges) <= {dos.edge_key(*e) for e in PAPER_EDGES}


def test_generator_determinism_and_empty():
    a = dos.generate_schedule(7, PAPER_EDGES, 4.0, 0.1, 20.0, 0.2, 2.0)
    b = dos.generate_schedule(7, PAPER_EDGES, 4.0, 0.1, 20.0, 0.2, 2.0)
    assert a.edges == b.edges
    e = dos.generate_schedule(7, PAPER_EDGES, 4.0, 0.1, 20.0, 0.0, 2.0)
    assert all(v == () for v in e.edges.values())


def test_generator_rejects_bad_arguments():
    with pytest.raises(ValueError):
        dos.generate_schedule(0, PAPER_EDGES, 1.0, 0.1, 20.0, 0.2, 2.0)
    with pytest.raises(ValueError):
        dos.generate_schedule(0, PAPER_EDGES, 4.0, 0.1, 20.0, -1.0, 2.0)
