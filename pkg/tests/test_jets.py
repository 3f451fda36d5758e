import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from calibra import jets
from calibra.expr import parse_expression
from calibra.manifold import ScalarField

X, Y, Z = sp.symbols("x y z")

# expression text in the package grammar and the same function in sympy
CASES = [
    ("x^3*y - 2*x*y^2", X ** 3 * Y - 2 * X * Y ** 2),
    ("sin(x)*cos(y)", sp.sin(X) * sp.cos(Y)),
    ("exp(x*y)/(1+x^2)", sp.exp(X * Y) / (1 + X ** 2)),
    ("log(x^2+y^2+1)", sp.log(X ** 2 + Y ** 2 + 1)),
    ("sqrt(x^2+y^2+z^2+1)", sp.sqrt(X ** 2 + Y ** 2 + Z ** 2 + 1)),
    ("tan(x/3)*sinh(y)+cosh(z)", sp.tan(X / 3) * sp.sinh(Y) + sp.cosh(Z)),
    ("(x+2)^y", (X + 2) ** Y),
    ("x^2.5+y", X ** sp.Rational(5, 2) + Y),
]


@pytest.mark.parametrize("text, sym", CASES)
def test_jet_matches_symbolic(text, sym):
    rng = np.random.default_rng(3)
    f = ScalarField.from_expr(text, 3)
    syms = [X, Y, Z]
    grad = [sp.lambdify(syms, sp.diff(sym, s)) for s in syms]
    hess = [[sp.lambdify(syms, sp.diff(sym, a, b)) for b in syms] for a in syms]
    for _ in range(10):
        p = rng.uniform(0.2, 1.5, 3)
        v, g, h = f.eval(p)
        assert v == pytest.approx(float(sym.subs(dict(zip(syms, p)))), rel=1e-12)
        assert np.allclose(g, [gi(*p) for gi in grad], rtol=1e-11, atol=1e-12)
        assert np.allclose(h, [[hij(*p) for hij in row] for row in hess], rtol=1e-10, atol=1e-11)


def test_batched_jets_match_pointwise():
    f = ScalarField.from_expr("sin(x)*y^2", 2)
    P = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    batch = f.jet(P)
    for i, p in enumerate(P):
        single = f.jet(p)
        assert np.allclose(batch.g[i], single.g) and np.allclose(batch.h[i], single.h)


def test_first_order_jets_drop_hessian():
    s = jets.seed(np.array([1.0, 2.0]), order=1)
    out = s[0] * s[1]
    assert out.h is None and np.allclose(out.g, [2.0, 1.0])


def test_symbolic_diff_agrees_with_jets():
    ex = parse_expression("exp(x)*sin(x*y)")
    f = ScalarField.from_expr(ex, 2)
    p = np.array([0.4, -0.7])
    _, g, h = f.eval(p)
    assert ex.diff(0)(*p) == pytest.approx(g[0])
    assert ex.diff(0).diff(1)(*p) == pytest.approx(h[0, 1])


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_hessian_is_symmetric(a, b):
    f = ScalarField.from_expr("sin(x*y)+x^2*exp(y)", 2)
    _, _, h = f.eval(np.array([a, b]))
    assert np.allclose(h, h.T)
