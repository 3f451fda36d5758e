import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calibra.expr import (
    ExpressionSyntaxError,
    UnknownIdentifierError,
    parse_expression,
)


def test_value_at_point():
    assert parse_expression("x^2 + sin(y)")(1.0, 0.0) == pytest.approx(1.0)


def test_second_derivative_of_cube():
    d2 = parse_expression("x^3").diff(0).diff(0)
    assert d2(2.0) == pytest.approx(12.0)


def test_syntax_error_points_at_operator():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("x +* y")
    assert err.value.column == 4 and err.value.line == 1


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse_expression("foo + 1")
    with pytest.raises(UnknownIdentifierError):
        parse_expression("t^2", ["s"])


@pytest.mark.parametrize("text, value", [
    ("-2^2", -4.0),
    ("2^3^2", 512.0),
    ("2*3+4/2", 8.0),
    ("(1+2)*3", 9.0),
    ("-x^2", -9.0),
    ("pi", math.pi),
    ("2*e", 2 * math.e),
    ("sqrt(16)+cosh(0)+sinh(0)+tan(0)+exp(0)+log(1)", 6.0),
])
def test_precedence(text, value):
    assert parse_expression(text)(3.0) == pytest.approx(value)


def test_size_limit():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("x+" * 40000 + "x")


def test_aliases_and_indexed_names():
    ex = parse_expression("x1 + 10*x2 + 100*theta")
    assert ex(1.0, 2.0) == pytest.approx(1 + 20 + 200)
    assert parse_expression("r*cos(theta)")(2.0, 0.0) == pytest.approx(2.0)


def test_vectorized_evaluation():
    ex = parse_expression("x*y")
    out = ex(np.arange(3.0), np.full(3, 2.0))
    assert np.allclose(out, [0, 2, 4])


_atoms = st.sampled_from(["x", "y", "1", "2.5", "pi"])


def _combine(children):
    binop = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(
        lambda t: f"({t[0]}){t[1]}({t[2]})")
    call = st.tuples(st.sampled_from(["sin", "cos", "exp", "sqrt"]), children).map(
        lambda t: f"{t[0]}({t[1]})")
    neg = children.map(lambda c: f"-({c})")
    return binop | call | neg


_exprs = st.recursive(_atoms, _combine, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(_exprs)
def test_pretty_round_trip(text):
    ex = parse_expression(text)
    again = parse_expression(ex.pretty())
    assert again == ex
    assert parse_expression(again.pretty()).pretty() == ex.pretty()
