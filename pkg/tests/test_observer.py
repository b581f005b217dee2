import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fxtcor.observer import ObserverParams, lyapunov_u, observer_rhs, vhat_derivatives

from oracles import chain_fd_errors, spread_layers

S = np.array([[0.0, 1.0], [-1.0, 0.0]])
P = ObserverParams(4.0, 6.0, 6.0, 1.6, 2.1, 4.1, 3, 7, 1e-2)


def test_consensus_is_an_equilibrium():
    N, n = 4, 3
    v = np.array([0.3, -0.7])
    G = np.ones((N + 1, N + 1)) - np.eye(N + 1)
    dvh, deps = observer_rhs(P, S, G, v, np.tile(v, (N, 1)), np.tile(v, (N, n, 1)))
    np.testing.assert_allclose(dvh, np.tile(S @ v, (N, 1)))
    np.testing.assert_allclose(deps, np.tile(S @ v, (N, n, 1)))


def test_isolated_agent_top_layer_follows_exosystem_only():
    N, n, q = 2, 2, 2
    G = np.zeros((N + 1, N + 1))
    rng = np.random.default_rng(0)
    eps = rng.normal(size=(N, n, q))
    _, deps = observer_rhs(P, S, G, np.zeros(q), rng.normal(size=(N, q)), eps)
    np.testing.assert_allclose(deps[:, -1], eps[:, -1] @ S.T)


def test_leader_coupling_pulls_towards_v():
    G = np.zeros((2, 2))
    G[1, 0] = G[0, 1] = 1.0
    v = np.array([1.0, 0.0])
    eps = np.zeros((1, 1, 2))
    _, deps = observer_rhs(P, np.zeros((2, 2)), G, v, np.zeros((1, 2)), eps)
    w = -1.0
    expect = -(1.6 * w + 2.1 * np.sign(w) * abs(w) ** (3 / 7) + 4.1 * np.sign(w) * abs(w) ** (11 / 7))
    assert deps[0, 0, 0] == pytest.approx(expect) and deps[0, 0, 1] == 0.0


def test_chain_matches_finite_differences_of_the_flow():
    rng = np.random.default_rng(11)
    worst = max(max(chain_fd_errors(P, S, spread_layers(rng))) for _ in range(25))
    assert worst < 1e-4


def test_chain_order_zero_and_one():
    rng = np.random.default_rng(3)
    layers = spread_layers(rng)
    d = vhat_derivatives(P, S, layers[0], layers[1:], 1)
    np.testing.assert_array_equal(d[0], layers[0])
    w = layers[0] - layers[1]
    f = 4 * w + 6 * np.sign(w) * np.abs(w) ** (3 / 7) + 6 * np.sign(w) * np.abs(w) ** (11 / 7)
    np.testing.assert_allclose(d[1], S @ layers[0] - f, rtol=1e-13)


@given(st.floats(-0.0099, 0.0099))
def test_dead_band_drops_the_fractional_part(w):
    layers = np.array([[0.2, 0.1], [0.2 - w, 0.1 - w], [0.5, -0.3], [0.0, 0.4]])
    lin = ObserverParams(4.0, 0.0, 0.0, 1.6, 0.0, 0.0, 3, 7, 1e-2)
    full = vhat_derivatives(P, S, layers[0], layers[1:], 1)
    ref = vhat_derivatives(lin, S, layers[0], layers[1:], 1)
    np.testing.assert_array_equal(full, ref)


def test_exponential_reduction_and_validation():
    e = P.exponential_reduction()
    assert (e.delta1, e.mu1) == (4.0, 1.6) and e.delta2 == e.delta3 == e.mu2 == e.mu3 == 0.0
    with pytest.raises(ValueError):
        e.validate_positive()
    P.validate_positive()
    for bad in [(3, 6), (4, 7), (7, 3), (-3, 7)]:
        with pytest.raises(ValueError):
            ObserverParams(1, 1, 1, 1, 1, 1, *bad)
    with pytest.raises(ValueError):
        ObserverParams(1, 1, 1, 1, 1, 1, 3, 7, -1.0)
    with pytest.raises(ValueError):
        vhat_derivatives(P, S, np.zeros(2), np.zeros((3, 2)), 4)


def test_lyapunov_u():
    assert lyapunov_u(np.array([[1.0, 0.0], [0.0, 2.0]]), np.zeros(2)) == 2.5
