"""Explicit model geometries used by the scenario catalog."""

from __future__ import annotations

import math

import numpy as np

from calibra import jets
from calibra.calibration import G2Structure, KahlerStructure
from calibra.expr import Expression, parse_expression
from calibra.manifold import MetricField, ScalarField
from calibra.submersion import RiemannianSubmersion

TWO_PI = 2 * math.pi


def polar() -> RiemannianSubmersion:
    """Flat R^2 minus the origin in polar coordinates ``(r, theta)`` over ``r``."""
    total = MetricField.diagonal([1.0, lambda r, th: r * r], lower=[0.0, -np.inf], name="polar",
                                 coords=("r", "theta"))
    base = MetricField.identity(1, lower=[0.0], name="r-line", coords=("r",))
    return RiemannianSubmersion(
        total, base,
        projection=lambda r, th: [r],
        fibre_param=lambda b, y: [b, y],
        fibre_lower=[0.0], fibre_upper=[TWO_PI],
        name="polar",
        cartesian=lambda r, th: [r * jets.cos(th), r * jets.sin(th)],
    )


def cylinder() -> RiemannianSubmersion:
    """R^2 minus the origin with metric ``(dx^2 + dy^2) / r^2`` over ``t = log r``.

    Chart ``(r, theta)``; the metric reads ``dr^2 / r^2 + dtheta^2``, so the
    circles are totally geodesic and the base is the flat ``t``-line.
    """
    total = MetricField.diagonal([lambda r, th: 1.0 / (r * r), 1.0], lower=[0.0, -np.inf],
                                 name="cylinder", coords=("r", "theta"))
    base = MetricField.identity(1, name="t-line", coords=("t",))
    return RiemannianSubmersion(
        total, base,
        projection=lambda r, th: [jets.log(r)],
        fibre_param=lambda t, y: [jets.exp(t), y],
        fibre_lower=[0.0], fibre_upper=[TWO_PI],
        name="cylinder",
        cartesian=lambda r, th: [r * jets.cos(th), r * jets.sin(th)],
    )


def revolution(profile: str | Expression, kind: str = "arclength", variable: str = "s",
               lower: float = -np.inf, upper: float = np.inf,
               name: str = "rev_surface") -> RiemannianSubmersion:
    """S^1-invariant surface metric from an orbit-radius profile.

    ``kind="arclength"``: ``ds^2 + r(s)^2 dphi^2``.
    ``kind="height"``: the surface ``(r(u) cos phi, r(u) sin phi, u)`` in R^3,
    i.e. ``(1 + r'(u)^2) du^2 + r(u)^2 dphi^2``.
    """
    r = profile if isinstance(profile, Expression) else parse_expression(profile, [variable])
    if kind == "arclength":
        a2 = lambda u: 1.0  # noqa: E731
    elif kind == "height":
        dr = r.diff(0)
        a2 = lambda u: 1.0 + dr(u) * dr(u)  # noqa: E731
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    total = MetricField.diagonal([lambda u, ph: a2(u), lambda u, ph: r(u) * r(u)],
                                 lower=[lower, -np.inf], upper=[upper, np.inf], name=name,
                                 coords=(variable, "phi"))
    base = MetricField.diagonal([lambda u: a2(u)], lower=[lower], upper=[upper], name=f"{name} base",
                                coords=(variable,))
    rs = RiemannianSubmersion(
        total, base,
        projection=lambda u, ph: [u],
        fibre_param=lambda b, y: [b, y],
        fibre_lower=[0.0], fibre_upper=[TWO_PI],
        name=name,
    )
    rs.profile = r
    rs.profile_kind = kind
    return rs


def s2_latitude() -> RiemannianSubmersion:
    """Unit sphere ``dtheta^2 + sin^2(theta) dphi^2`` over the colatitude."""
    return revolution("sin(theta)", "arclength", "theta", 0.0, math.pi, "s2_latitude")


def flat_torus(n: int, base_dims: int, name: str | None = None) -> RiemannianSubmersion:
    """Flat T^n with angle coordinates, projecting to the first ``base_dims`` angles."""
    total = MetricField.identity(n, name=f"T^{n}")
    base = MetricField.identity(base_dims, name=f"T^{base_dims}")
    k = n - base_dims
    return RiemannianSubmersion(
        total, base,
        projection=lambda *x: list(x[:base_dims]),
        fibre_param=lambda *by: list(by),
        fibre_lower=[0.0] * k, fibre_upper=[TWO_PI] * k,
        name=name or f"flat_t{n}",
    )


def flat_t2() -> RiemannianSubmersion:
    return flat_torus(2, 1, "flat_t2")


def t7_coassoc() -> RiemannianSubmersion:
    """Flat T^7 over T^3 (angles 1-3) with coassociative T^4 fibres (angles 4-7)."""
    return flat_torus(7, 3, "t7_coassoc")


def flat_c2_torus() -> RiemannianSubmersion:
    """Flat C^2 = R^4 ``(x1, y1, x2, y2)`` over ``(|z1|, |z2|)`` with T^2 orbits."""
    total = MetricField.identity(4, name="C^2")
    base = MetricField.identity(2, lower=[0.0, 0.0], name="(r1, r2)")
    return RiemannianSubmersion(
        total, base,
        projection=lambda x1, y1, x2, y2: [jets.sqrt(x1 * x1 + y1 * y1), jets.sqrt(x2 * x2 + y2 * y2)],
        fibre_param=lambda r1, r2, a, b: [r1 * jets.cos(a), r1 * jets.sin(a),
                                          r2 * jets.cos(b), r2 * jets.sin(b)],
        fibre_lower=[0.0, 0.0], fibre_upper=[TWO_PI, TWO_PI],
        name="flat_c2_torus",
    )


def kahler_for(rs: RiemannianSubmersion) -> KahlerStructure:
    """Kähler structure on the total space of a 2- or 4-dimensional model."""
    if rs.n == 2:
        return KahlerStructure.surface(rs.total, rs.name)
    if rs.name == "flat_c2_torus":
        return KahlerStructure.flat(2)
    raise ValueError(f"no Kähler structure for {rs.name}")


def g2_for(rs: RiemannianSubmersion, tau2=None) -> G2Structure:
    if rs.n != 7:
        raise ValueError(f"no G2 structure for {rs.name}")
    return G2Structure(tau2=tau2)


def user_field(rs: RiemannianSubmersion, source: str | Expression) -> ScalarField:
    """A scalar field from an expression in Cartesian ``x, y`` (when the model
    has a Cartesian picture) or in the chart coordinates otherwise."""
    if rs.cartesian is None:
        return ScalarField.from_expr(source, rs.n)
    ex = source if isinstance(source, Expression) else parse_expression(source, ["x", "y"])
    return ScalarField(lambda *c: ex(*rs.cartesian(*c)), rs.n, ex.pretty())
