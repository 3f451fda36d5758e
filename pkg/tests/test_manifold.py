import math

import numpy as np
import pytest

from calibra import models
from calibra.manifold import (
    ChartDomainError,
    GeodesicLeftChartError,
    ImmersedSubmanifold,
    MetricField,
    RankDeficiencyError,
    ScalarField,
    christoffel,
    curvature,
    geodesic,
    gram_schmidt,
    hessian,
    laplacian,
    restricted_laplacian,
    submanifold_geometry,
)
from calibra import jets


def sphere():
    return MetricField.diagonal([1.0, lambda th, ph: jets.sin(th) ** 2], lower=[0.0, -np.inf],
                                upper=[math.pi, np.inf])


def hyperbolic():
    return MetricField.diagonal([lambda x, y: 1 / y ** 2, lambda x, y: 1 / y ** 2],
                                lower=[-np.inf, 0.0])


def test_polar_christoffel_closed_form():
    g = models.polar().total
    G = christoffel(g, [2.0, 0.3])
    # Gamma^r_{theta theta} = -r, Gamma^theta_{r theta} = 1/r
    assert G[0, 1, 1] == pytest.approx(-2.0)
    assert G[1, 0, 1] == pytest.approx(0.5)
    assert G[1, 1, 0] == pytest.approx(0.5)
    assert abs(G[0, 0, 0]) < 1e-15


def test_flat_metrics_have_no_curvature():
    for g, p in [(models.polar().total, [1.3, 0.2]), (models.cylinder().total, [0.7, 1.0]),
                 (MetricField.identity(4), [0.1, 0.2, 0.3, 0.4])]:
        cp = curvature(g, p)
        assert np.abs(cp.riemann).max() < 1e-10 and abs(cp.scalar) < 1e-10


def test_sphere_and_hyperbolic_scalar_curvature():
    assert curvature(sphere(), [1.1, 0.0]).scalar == pytest.approx(2.0, abs=1e-10)
    assert curvature(hyperbolic(), [0.3, 0.8]).scalar == pytest.approx(-2.0, abs=1e-10)


def test_sphere_sectional_and_ricci():
    cp = curvature(sphere(), [0.9, 0.0])
    assert cp.sectional(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)
    assert np.allclose(cp.ricci, cp.metric)


def test_fd_curvature_agrees_and_guards_boundary():
    g = sphere()
    jet = curvature(g, [1.0, 0.0])
    fd = curvature(g, [1.0, 0.0], method="fd")
    assert np.allclose(jet.riemann, fd.riemann, atol=1e-7)
    with pytest.raises(ChartDomainError):
        curvature(g, [1e-4, 0.0], method="fd")


def test_covariant_hessian_polar():
    # f = x = r cos(theta): its Hessian vanishes in flat space
    rs = models.polar()
    f = models.user_field(rs, "x")
    assert np.abs(hessian(rs.total, f, [1.7, 0.4])).max() < 1e-14
    f2 = models.user_field(rs, "x^2+y^2")
    assert laplacian(rs.total, f2, [1.7, 0.4]) == pytest.approx(4.0)


def test_great_circle_geodesic():
    g = sphere()
    pts, vel = geodesic(g, [math.pi / 2, 0.0], [0.0, 1.0], 1.0, 64)
    assert np.allclose(pts[-1], [math.pi / 2, 1.0], atol=1e-10)
    speeds = [v @ g.matrix(p) @ v for p, v in zip(pts, vel)]
    assert max(speeds) - min(speeds) < 1e-10


def test_geodesic_leaving_chart():
    g = models.polar().total
    with pytest.raises(GeodesicLeftChartError):
        geodesic(g, [1.0, 0.0], [-1.0, 0.0], 2.0, 32)


def test_gram_schmidt():
    G = np.array([[2.0, 0.3], [0.3, 1.0]])
    E = gram_schmidt(G, np.eye(2))
    assert np.allclose(E.T @ G @ E, np.eye(2))
    with pytest.raises(RankDeficiencyError):
        gram_schmidt(np.eye(2), np.array([[1.0, 2.0], [1.0, 2.0]]))


def circle(R):
    return ImmersedSubmanifold(lambda t: [R * jets.cos(t), R * jets.sin(t)], 1, MetricField.identity(2))


def test_circle_mean_curvature():
    geo = submanifold_geometry(circle(2.0), [0.3])
    assert geo.mean_curvature_norm == pytest.approx(0.5)
    assert not geo.is_minimal
    # H points to the centre
    assert np.allclose(geo.mean_curvature, -0.25 * geo.point)


def test_restricted_laplacian_on_circle():
    # f = x on the circle of radius R is R cos(s/R): intrinsic Laplacian -x/R^2
    R = 2.0
    f = ScalarField.from_expr("x", 2)
    for t in (0.0, 0.7, 2.0):
        intrinsic, ambient = restricted_laplacian(circle(R), f, [t])
        x = R * math.cos(t)
        assert intrinsic == pytest.approx(-x / R ** 2)
        assert ambient == pytest.approx(0.0, abs=1e-14)
    # f = x^2 + y^2 is constant on the circle
    intrinsic, ambient = restricted_laplacian(circle(R), ScalarField.from_expr("x^2+y^2", 2), [0.4])
    assert intrinsic == pytest.approx(0.0, abs=1e-12) and ambient == pytest.approx(2.0)
