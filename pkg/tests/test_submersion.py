import math

import numpy as np
import pytest

from calibra import models
from calibra.submersion import (
    GridTooCoarseError,
    NonCompactFibreError,
    NotInvariantError,
    Pushdown,
    RiemannianSubmersion,
    base_convexity_check,
    fd_hessian,
    fibre_integral,
    fibre_supremum,
    fibre_volume,
    haar_pushdown,
    hessian_transfer_residual,
    horizontal_lift,
    split,
)
from calibra.manifold import MetricField


def test_polar_split_and_lift():
    rs = models.polar()
    p = np.array([2.0, 0.4])
    assert np.allclose(horizontal_lift(rs, [1.0], p), [1.0, 0.0])
    vert, hor = split(rs, p, [0.3, 0.7])
    assert np.allclose(hor, [0.3, 0.0]) and np.allclose(vert, [0.0, 0.7])


def test_c2_torus_lift_is_radial_unit_vector():
    rs = models.flat_c2_torus()
    p = rs.fibre_point([1.2, 0.7], [0.5, 2.0])
    assert np.allclose(horizontal_lift(rs, [1.0, 0.0], p), [math.cos(0.5), math.sin(0.5), 0, 0])
    assert np.allclose(horizontal_lift(rs, [0.0, 1.0], p), [0, 0, math.cos(2.0), math.sin(2.0)])


@pytest.mark.parametrize("make,F,b", [
    (models.polar, "r^3", [1.3]),
    (models.cylinder, "t^2+sin(t)", [0.4]),
    (models.s2_latitude, "cos(theta)", [1.1]),
    (models.flat_c2_torus, "x1^2*x2+x2^3", [1.0, 1.5]),
])
def test_hessian_transfer(make, F, b):
    rs = make()
    rng = np.random.default_rng(0)
    X = rng.standard_normal(rs.m)
    assert hessian_transfer_residual(rs, F, b, X) < 1e-9


@pytest.mark.parametrize("make,b,expected", [
    (models.polar, [1.7], 2 * math.pi * 1.7),
    (models.cylinder, [0.9], 2 * math.pi),
    (models.s2_latitude, [1.0], 2 * math.pi * math.sin(1.0)),
    (models.flat_c2_torus, [1.0, 2.0], 4 * math.pi ** 2 * 2.0),
    (models.t7_coassoc, [0.0, 0.0, 0.0], (2 * math.pi) ** 4),
])
def test_fibre_volume(make, b, expected):
    grid = 32 if make is models.t7_coassoc else 64
    assert fibre_volume(make(), b, grid) == pytest.approx(expected, rel=1e-12)


def test_fibre_integral_and_haar_closed_forms():
    rs = models.polar()
    f = models.user_field(rs, "x^2+3*y")
    r = 1.5
    # int_0^{2pi} r^2 cos^2 r dtheta = pi r^3; the linear term integrates to zero
    assert fibre_integral(rs, f, [r]) == pytest.approx(math.pi * r ** 3, rel=1e-12)
    assert haar_pushdown(rs, f, [r]) == pytest.approx(r ** 2 / 2, rel=1e-12)


def test_fibre_supremum_refines_off_grid():
    rs = models.polar()
    f = models.user_field(rs, "cos(0.123)*x+sin(0.123)*y")
    assert fibre_supremum(rs, f, [2.0], grid=16) == pytest.approx(2.0, abs=1e-10)
    assert fibre_supremum(rs, f, [2.0], grid=16, refine_iters=0) < 2.0 - 1e-4


def test_pushdowns_and_invariance():
    rs = models.cylinder()
    inv = Pushdown("invariant", rs, models.user_field(rs, "log(sqrt(x^2+y^2))^2"))
    assert inv([0.7]) == pytest.approx(0.49)
    with pytest.raises(NotInvariantError):
        Pushdown("invariant", rs, models.user_field(rs, "x"))([0.2])
    with pytest.raises(ValueError):
        Pushdown("median", rs, "r")
    sup = Pushdown("supremum", rs, models.user_field(rs, "x"))
    assert sup([0.5]) == pytest.approx(math.exp(0.5), rel=1e-10)


def test_noncompact_fibres_rejected():
    g = MetricField.identity(2)
    rs = RiemannianSubmersion(g, MetricField.identity(1), lambda x, y: [x], lambda b, y: [b, y],
                              [0.0], [1.0], periodic=[False])
    with pytest.raises(NonCompactFibreError):
        fibre_volume(rs, [0.0])


def test_fd_hessian_of_quadratic_is_exact():
    A = np.array([[2.0, 0.5], [0.5, -1.0]])
    grad, H = fd_hessian(lambda b: 0.5 * b @ A @ b + b[0], np.array([0.3, -0.4]), 1e-2)
    assert np.allclose(H, A, atol=1e-9)
    assert np.allclose(grad, A @ [0.3, -0.4] + [1, 0], atol=1e-9)


def test_base_convexity_modes():
    good = base_convexity_check(lambda b: b[0] ** 2 + b[1] ** 4, [-1, -1], [1, 1], points=9)
    assert good.passed and good.residual < 1e-6
    bad = base_convexity_check(lambda b: b[0] ** 2 - b[1] ** 2, [-1, -1], [1, 1], points=9)
    assert not bad.passed and bad.worst == pytest.approx(-2.0, abs=1e-6)
    mid = base_convexity_check(lambda b: math.sin(b[0]), [0.5], [3.0], points=16, mode="midpoint")
    assert not mid.passed
    assert base_convexity_check(lambda b: math.exp(b[0]), [0], [2], mode="midpoint").passed
    with pytest.raises(GridTooCoarseError):
        base_convexity_check(lambda b: b[0], [0], [1], points=4)


def test_fibre_quadrature_grid_floor():
    with pytest.raises(GridTooCoarseError):
        fibre_volume(models.polar(), [1.0], grid=16)
