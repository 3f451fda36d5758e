import math

import numpy as np
import pytest

from calibra import models
from calibra.checks import _g2_of
from calibra.scenarios import load_scenario
from calibra.variation import (
    FibreNotCoassociativeError,
    FibreNotMinimalError,
    FibreVariation,
    first_variation,
    integral_second_derivative,
    second_variation_g2,
    second_variation_kahler,
    second_variation_riemannian,
    volume_profile_fd,
)


def test_sphere_equator_riemannian():
    # Vol(theta) = 2 pi sin(theta), so Vol'' = -2 pi at the equator
    rs = models.s2_latitude()
    rep = second_variation_riemannian(FibreVariation(rs, [math.pi / 2], [1.0]))
    assert rep.second_analytic == pytest.approx(-2 * math.pi, abs=1e-8)
    assert rep.second_fd == pytest.approx(-2 * math.pi, rel=1e-5)
    assert rep.consistent
    assert abs(rep.first) < 1e-12


def test_sphere_equator_kahler_agrees():
    rs = models.s2_latitude()
    v = FibreVariation(rs, [math.pi / 2], [1.0])
    rep = second_variation_kahler(v, models.kahler_for(rs))
    assert rep.second_analytic == pytest.approx(-2 * math.pi, abs=1e-6)


def test_kahler_formula_needs_minimal_fibre():
    rs = models.s2_latitude()
    with pytest.raises(FibreNotMinimalError):
        second_variation_kahler(FibreVariation(rs, [1.0], [1.0]), models.kahler_for(rs))


@pytest.mark.parametrize("r", [0.8, 1.0, 2.5])
def test_polar_terms(r):
    rs = models.polar()
    v = FibreVariation(rs, [r], [1.0])
    rep = second_variation_riemannian(v)
    assert rep.terms["second_fundamental"] == pytest.approx(-2 * math.pi / r, rel=1e-10)
    assert rep.terms["mean_curvature_squared"] == pytest.approx(2 * math.pi / r, rel=1e-10)
    assert abs(rep.second_analytic) < 1e-10
    assert first_variation(v) == pytest.approx(2 * math.pi, rel=1e-12)


def test_catenoid_neck():
    # height profile r = cosh z: Vol(s) = 2 pi cosh z(s) with dz/ds = 1/cosh z, so Vol''(0) = 2 pi
    rs = models.revolution("cosh(z)", "height", "z", -1.0, 1.0)
    rep = second_variation_riemannian(FibreVariation(rs, [0.0], [1.0]))
    assert rep.second_analytic == pytest.approx(2 * math.pi, abs=1e-8)
    assert rep.consistent


def test_first_variation_matches_volume_profile():
    rs = models.s2_latitude()
    v = FibreVariation(rs, [1.0], [1.0])
    fd, _ = volume_profile_fd(v, 1e-4)
    assert first_variation(v) == pytest.approx(2 * math.pi * math.cos(1.0), rel=1e-10)
    assert fd == pytest.approx(first_variation(v), rel=1e-7)


def test_t7_g2_formula_vanishes_with_torsion():
    sc = load_scenario("t7_coassoc")
    g2 = _g2_of(sc)
    v = FibreVariation(sc.rs, [0.1, 0.2, 0.3], [1.0, 0.0, 0.0])
    rep = second_variation_g2(v, g2, t_step=None)
    # fibres of the flat torus all have volume (2 pi)^4
    assert abs(rep.second_analytic) < 1e-8
    assert abs(rep.terms["stokes"]) < 1e-8
    assert math.isnan(rep.second_fd)


def test_g2_formula_rejects_wrong_dimensions():
    rs = models.flat_torus(7, 4)
    v = FibreVariation(rs, [0.0] * 4, [1.0, 0, 0, 0])
    with pytest.raises(FibreNotCoassociativeError):
        second_variation_g2(v, t_step=None)


def test_integral_second_derivative_cylinder():
    # int (x^2 + 2) over the circle over t is pi e^{2t} + 4 pi
    rs = models.cylinder()
    v = FibreVariation(rs, [0.0], [1.0])
    f = models.user_field(rs, "x^2+2")
    out = integral_second_derivative(v, f)
    assert out["total"] == pytest.approx(4 * math.pi, rel=1e-10)
    out = integral_second_derivative(FibreVariation(rs, [0.3], [1.0]), f)
    assert out["total"] == pytest.approx(4 * math.pi * math.exp(0.6), rel=1e-10)
