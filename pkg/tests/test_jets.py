import math

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from fxtcor import jets
from fxtcor.jets import Jet

X, Y, Z = sympy.symbols("x y z")
SYMS = (X, Y, Z)


def sympy_coeffs(expr, point, tab):
    """Taylor coefficients d^alpha f / alpha! in the table's monomial order."""
    subs = dict(zip(SYMS, point))
    out = np.empty(tab.ncoef)
    for k, e in enumerate(tab.exps):
        d = expr
        for s, p in zip(SYMS, e):
            if p:
                d = sympy.diff(d, s, int(p))
        out[k] = float(d.subs(subs)) / math.prod(math.factorial(int(p)) for p in e)
    return out


def build(point, tab, f):
    x, y, z = (Jet.var(tab, v, point[v]) for v in range(3))
    return f(x, y, z)


CASES = [
    (lambda x, y, z: (x * y).sin() + (x + z) ** 3 * y.cos(), sympy.sin(X * Y) + (X + Z) ** 3 * sympy.cos(Y)),
    (lambda x, y, z: x * y * z - 2.5 * x + (y - z) ** 4, X * Y * Z - 2.5 * X + (Y - Z) ** 4),
    (lambda x, y, z: (x ** 2 + 1.0).cos() * z.sin(), sympy.cos(X ** 2 + 1) * sympy.sin(Z)),
]

pts = st.tuples(*(st.floats(-1.5, 1.5) for _ in range(3)))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("case", range(len(CASES)))
def test_jet_coefficients_match_symbolic(case, d):
    tab = jets.tables(3, d)
    f, expr = CASES[case]
    for point in [(0.3, -0.7, 1.1), (-1.2, 0.4, 0.05)]:
        np.testing.assert_allclose(build(point, tab, f).c, sympy_coeffs(expr, point, tab), rtol=1e-11, atol=1e-11)


@given(pts)
def test_partial_is_derivative_jet(point):
    tab = jets.tables(3, 2)
    j = build(point, tab, CASES[0][0])
    p = j.partial(1)
    assert p.order == 1
    expr = sympy.diff(CASES[0][1], Y)
    np.testing.assert_allclose(p.c, sympy_coeffs(expr, point, jets.tables(3, 1)), rtol=1e-10, atol=1e-10)


@given(pts, st.integers(0, 6))
def test_integer_powers_agree_with_repeated_products(point, k):
    tab = jets.tables(3, 2)
    x = Jet.var(tab, 0, point[0]) + Jet.var(tab, 2, point[2])
    ref = Jet.const(tab, 1.0)
    for _ in range(k):
        ref = ref * x
    np.testing.assert_allclose((x ** k).c, ref.c, rtol=1e-12, atol=1e-12)


def test_table_layout():
    tab = jets.tables(3, 2)
    assert tab.ncoef == 10 and list(tab.nup) == [1, 4, 10]
    assert list(tab.exps[1]) == [1, 0, 0] and tab.deg[0] == 0
    assert jets.tables(5, 0).ncoef == 1


def test_order_bookkeeping():
    tab = jets.tables(2, 2)
    x = Jet.var(tab, 0, 1.0)
    lower = Jet(x.c, tab, 1)
    assert (x * lower).order == 1 and (x + lower).order == 1
    np.testing.assert_array_equal(x.grad, [1.0, 0.0])
    with pytest.raises(ValueError):
        Jet(x.c, tab, 0).grad
    with pytest.raises(ValueError):
        x ** -1
    assert (3.0 - x).value == 2.0 and (2 * x).c[1] == 2.0
