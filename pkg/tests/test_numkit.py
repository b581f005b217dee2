import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fxtcor.numkit import (Bracket, NoRootError, NumericalBlowUp, jacobi_eigenvalues, rk4_step, signed_pow,
                           solve_root_increasing, sym_eig_extrema)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(finite, st.sampled_from([(3, 7), (11, 7), (1, 3), (5, 5)]))
def test_signed_pow_is_odd_and_matches_magnitude(x, nd):
    num, den = nd
    y = signed_pow(x, num, den)
    assert signed_pow(-x, num, den) == pytest.approx(-y, abs=1e-12)
    assert abs(y) == pytest.approx(abs(x) ** (num / den), rel=1e-12, abs=1e-300)


def test_signed_pow_zero_and_arrays():
    assert signed_pow(0.0, 3, 7) == 0.0
    out = signed_pow(np.array([-8.0, 0.0, 8.0]), 1, 3)
    np.testing.assert_allclose(out, [-2.0, 0.0, 2.0], rtol=1e-14)


@pytest.mark.parametrize("nd", [(2, 7), (3, 4), (0, 3), (-3, 7)])
def test_signed_pow_rejects_even_or_nonpositive(nd):
    with pytest.raises(ValueError):
        signed_pow(1.0, *nd)


@given(arrays(float, (5, 5), elements=st.floats(-10, 10, allow_nan=False)))
def test_jacobi_matches_lapack(a):
    s = 0.5 * (a + a.T)
    np.testing.assert_allclose(jacobi_eigenvalues(a), np.linalg.eigvalsh(s), atol=1e-9)


def test_jacobi_diagonal_and_extrema():
    np.testing.assert_array_equal(jacobi_eigenvalues(np.diag([3.0, -1.0, 2.0])), [-1.0, 2.0, 3.0])
    assert sym_eig_extrema([[0.0, 1.0], [-1.0, 0.0]]) == (0.0, 0.0)
    with pytest.raises(ValueError):
        jacobi_eigenvalues(np.zeros((2, 3)))


@given(st.floats(0.01, 1e3))
def test_root_of_increasing_function(r):
    x = solve_root_increasing(lambda t: t ** 3 - r ** 3, Bracket(0.0, 1.0, tol=1e-12))
    assert x == pytest.approx(r, rel=1e-9)


def test_root_errors_and_bracket_validation():
    with pytest.raises(NoRootError):
        solve_root_increasing(lambda t: 1.0 + t, Bracket(0.0, 1.0))
    with pytest.raises(NoRootError):
        solve_root_increasing(lambda t: -1.0, Bracket(0.0, 1.0, hi_cap=16.0))
    assert solve_root_increasing(lambda t: t, Bracket(0.0, 1.0)) == 0.0
    for bad in ((1.0, 0.0), (0.0, 1.0, 0.0)):
        with pytest.raises(ValueError):
            Bracket(*bad)


def test_rk4_is_fourth_order():
    # y' = y on [0, 1]; the global error ratio on halving h tends to 16
    def run(h):
        y, t = np.array([1.0]), 0.0
        for _ in range(int(round(1 / h))):
            y = rk4_step(lambda t, y: y, t, y, h)
            t += h
        return abs(y[0] - math.e)

    ratio = run(0.1) / run(0.05)
    assert 14.0 < ratio < 17.0


def test_rk4_blow_up_and_bad_step():
    with pytest.raises(NumericalBlowUp):
        rk4_step(lambda t, y: y * np.nan, 0.0, np.array([1.0]), 0.1)
    with pytest.raises(ValueError):
        rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.0)
