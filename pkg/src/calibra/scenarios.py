"""Scenario catalog: model geometries with their default fields and checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from calibra import models
from calibra.calibration import G2Structure, KahlerStructure
from calibra.expr import parse_expression
from calibra.manifold import MetricField
from calibra.submersion import RiemannianSubmersion


class UnknownScenarioError(KeyError):
    pass


@dataclass
class Scenario:
    id: str
    description: str
    rs: RiemannianSubmersion | None = None
    kahler: KahlerStructure | None = None
    g2: G2Structure | None = None
    metric: MetricField | None = None
    base_lower: list = field(default_factory=list)
    base_upper: list = field(default_factory=list)
    base_point: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)
    checks: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric is None:
            if self.rs is not None:
                self.metric = self.rs.total
            elif self.kahler is not None:
                self.metric = self.kahler.metric
            elif self.g2 is not None:
                self.metric = self.g2.metric


def _polar(params) -> Scenario:
    rs = models.polar()
    return Scenario(
        "polar", "flat plane minus the origin over the radius",
        rs=rs, kahler=models.kahler_for(rs),
        base_lower=[0.5], base_upper=[3.0], base_point=[1.0],
        fields={"F": "log(r)", "F_convex": "r^2", "probe": "x^2+x*y"},
        checks=("hessian_transfer", "horizontal_geodesic", "restricted_laplacian", "radius_counterexample",
                "first_variation", "second_variation", "square_distance", "lagrangian_determinant"),
    )


def _cylinder(params) -> Scenario:
    rs = models.cylinder()
    return Scenario(
        "cylinder", "(dx^2+dy^2)/r^2 on the punctured plane over t = log r",
        rs=rs, kahler=models.kahler_for(rs),
        base_lower=[-1.5], base_upper=[1.5], base_point=[0.0],
        fields={"F": "t^2", "F_convex": "t^2",
                "invariant_psh": "log(sqrt(x^2+y^2))^2",
                "hadamard": ["x", "x^2-y^2", "log(sqrt(x^2+y^2))", "x^2+y^2"],
                "integral": "x^2+2",
                "convex": "log(sqrt(x^2+y^2))^2",
                "subharmonic": "x^2+y^2",
                "psh": "x^2+y^2+x"},
        checks=("hessian_transfer", "hadamard", "lassalle", "P3.1", "P5.1", "P5.2", "C5.1", "C6.1",
                "P7.1", "P7.2", "P7.4", "first_variation", "second_variation", "second_variation_kahler",
                "lagrangian_determinant", "ricci_two_form"),
    )


def _s2_latitude(params) -> Scenario:
    rs = models.s2_latitude()
    return Scenario(
        "s2_latitude", "unit sphere over the colatitude",
        rs=rs, kahler=models.kahler_for(rs),
        base_lower=[0.3], base_upper=[math.pi - 0.3], base_point=[math.pi / 2],
        fields={"F": "cos(theta)", "F_convex": "-cos(theta)"},
        checks=("hessian_transfer", "horizontal_geodesic", "restricted_laplacian", "P3.1", "first_variation",
                "second_variation", "second_variation_kahler", "toric_volume", "ricci_two_form",
                "lagrangian_determinant"),
    )


def _rev_surface(params) -> Scenario:
    profile = params.get("profile", "cosh(z)")
    kind = params.get("kind", "height")
    variable = params.get("variable", "z")
    lower = float(params.get("lower", -1.0))
    upper = float(params.get("upper", 1.0))
    rs = models.revolution(profile, kind, variable, lower, upper, "rev_surface")
    margin = 0.05 * (upper - lower)
    mid = 0.5 * (lower + upper)
    return Scenario(
        "rev_surface", f"surface of revolution with profile r({variable}) = {profile} ({kind})",
        rs=rs, kahler=models.kahler_for(rs),
        base_lower=[lower + margin], base_upper=[upper - margin], base_point=[mid],
        fields={"F": f"{variable}^2", "F_convex": f"{variable}^2"},
        checks=("hessian_transfer", "first_variation", "second_variation", "toric_volume"),
        params={"profile": profile, "kind": kind, "variable": variable, "lower": lower, "upper": upper},
    )


def _flat_cn(params) -> Scenario:
    n = int(params.get("n", 2))
    k = KahlerStructure.flat(n)
    return Scenario(
        "flat_cn", f"flat C^{n} with the standard complex structure",
        kahler=k, base_point=[0.0] * (2 * n),
        fields={"F": "x1^2+x2^2+x3^2+x4^2" if n == 2 else "x1^2+x2^2",
                "levi": ["x1^2+x2^2+x3^2+x4^2", "x1^2-x2^2", "2*x1^2-x2^2+x3*x4", "exp(x1)*cos(x3)+x2*x4"]
                if n == 2 else ["x1^2+x2^2", "x1^2-x2^2", "2*x1^2-x2^2"],
                # functions of the y-coordinates only: constant on the Lagrangian {y = 0}
                "lagrangian_constant": ["x2^2+x4^2", "x2^2-x4^2", "x2^2+x4^2+x2*x4"]
                if n == 2 else ["x2^2", "-x2^2"]},
        checks=("kahler_psh", "P5.1", "ricci_two_form", "square_distance"),
        params={"n": n},
    )


def _flat_t2(params) -> Scenario:
    rs = models.flat_t2()
    return Scenario(
        "flat_t2", "flat square torus over a circle",
        rs=rs, kahler=models.kahler_for(rs),
        base_lower=[0.0], base_upper=[2 * math.pi], base_point=[0.3],
        fields={"F": "cos(x1)", "F_convex": "cos(x1)", "integral": "2+cos(x1)*cos(x2)",
                "convex": "2-cos(x1)", "subharmonic": "2-cos(x1)+0.2*cos(x1)*cos(x2)"},
        checks=("hessian_transfer", "P3.1", "P7.1", "P7.2", "C6.1", "first_variation", "second_variation",
                "second_variation_kahler", "lagrangian_determinant", "toric_volume", "ricci_two_form"),
    )


def _flat_c2_torus(params) -> Scenario:
    rs = models.flat_c2_torus()
    return Scenario(
        "flat_c2_torus", "flat C^2 over (|z1|, |z2|) with T^2 orbits",
        rs=rs, kahler=models.kahler_for(rs),
        base_lower=[0.5, 0.5], base_upper=[2.0, 2.0], base_point=[1.0, 1.5],
        # total coordinates x1..x4 stand for (x1, y1, x2, y2); base coordinates x1, x2 for (r1, r2)
        fields={"F": "x1^2+x2", "convex": "x1^2+2*x4^2+x1*x3+x3^2+x3+1",
                "psh": "2*x1^2-x2^2+x3^2+x4^2"},
        checks=("hessian_transfer", "first_variation", "second_variation", "lagrangian_determinant",
                "P7.4", "ricci_two_form"),
    )


def _t7_coassoc(params) -> Scenario:
    rs = models.t7_coassoc()
    return Scenario(
        "t7_coassoc", "flat T^7 over T^3 with coassociative T^4 fibres",
        rs=rs, g2=models.g2_for(rs),
        base_lower=[0.0] * 3, base_upper=[2 * math.pi] * 3, base_point=[0.1, 0.2, 0.3],
        fields={"F": "cos(x1)+2", "F_convex": "cos(x1)+2", "integral": "2+cos(x1)*cos(x5)",
                "phi_psh": "x1^2-x4^2", "hphi": "x1^3-2*x2*x5^2+x3*x6*x7+x4^2*x1",
                "convex": "2-cos(x1)", "subharmonic": "2-cos(x1)",
                "tau2": {"45": "cos(x6)", "67": "sin(x4+x5)", "16": "cos(x2)*sin(x7)"}},
        checks=("hessian_transfer", "g2_identities", "phi_psh", "hphi", "P5.4", "P7.3", "C6.1",
                "first_variation", "second_variation_g2"),
    )


def _hyperbola_psh(params) -> Scenario:
    k = KahlerStructure.flat(1)
    return Scenario(
        "hyperbola_psh", "f = 2x^2 - y^2 on flat C: PSH, constant on Lagrangian hyperbolae, not convex",
        kahler=k, base_point=[0.7, 0.4],
        fields={"f": "2*x^2-y^2"},
        checks=("psh_counterexample",),
    )


CATALOG: dict[str, Callable[[dict], Scenario]] = {
    "polar": _polar,
    "cylinder": _cylinder,
    "s2_latitude": _s2_latitude,
    "rev_surface": _rev_surface,
    "flat_cn": _flat_cn,
    "flat_t2": _flat_t2,
    "flat_c2_torus": _flat_c2_torus,
    "t7_coassoc": _t7_coassoc,
    "hyperbola_psh": _hyperbola_psh,
}


def scenario_ids() -> list[str]:
    return list(CATALOG)


def describe() -> list[tuple[str, str]]:
    return [(sid, build({}).description) for sid, build in CATALOG.items()]


def load_scenario(sid: str, params: dict | None = None, fields: dict | None = None) -> Scenario:
    if sid not in CATALOG:
        raise UnknownScenarioError(f"unknown scenario {sid!r}; known: {', '.join(CATALOG)}")
    sc = CATALOG[sid](dict(params or {}))
    if fields:
        sc.fields.update(fields)
    return sc


# --- inline geometries -----------------------------------------------------------


def _compile(sources, variables):
    exprs = [parse_expression(s, variables) for s in sources]
    return lambda *args: [e(*args) for e in exprs]


def inline_scenario(doc: dict) -> Scenario:
    """Scenario from expressions: total/base metrics, projection and fibre map.

    ``doc`` keys: ``total_vars``, ``total_metric`` (matrix of expressions),
    ``base_vars``, ``base_metric``, ``projection`` (one expression per base
    variable, in the total variables), ``fibre_vars``, ``fibre_param`` (one
    expression per total variable, in base then fibre variables),
    ``fibre_lower``, ``fibre_upper``, ``base_lower``, ``base_upper``,
    ``base_point`` and optionally ``total_lower``/``total_upper``, ``fields``
    and ``checks``.
    """
    tv = list(doc["total_vars"])
    bv = list(doc["base_vars"])
    fv = list(doc["fibre_vars"])
    total = MetricField.from_fields(doc["total_metric"], tv, lower=doc.get("total_lower"),
                                    upper=doc.get("total_upper"), name="inline", coords=tuple(tv))
    base = MetricField.from_fields(doc["base_metric"], bv, lower=doc.get("base_lower"),
                                   upper=doc.get("base_upper"), name="inline base", coords=tuple(bv))
    if len(doc["projection"]) != len(bv) or len(doc["fibre_param"]) != len(tv):
        raise ValueError("projection/fibre_param arity does not match the variables")
    rs = RiemannianSubmersion(
        total, base,
        projection=_compile(doc["projection"], tv),
        fibre_param=_compile(doc["fibre_param"], bv + fv),
        fibre_lower=doc["fibre_lower"], fibre_upper=doc["fibre_upper"],
        name=doc.get("name", "inline"),
    )
    kahler = KahlerStructure.surface(total, rs.name) if total.dim == 2 else None
    lower = list(doc["base_lower"])
    upper = list(doc["base_upper"])
    point = list(doc.get("base_point", (np.add(lower, upper) / 2).tolist()))
    return Scenario(
        doc.get("name", "inline"), "inline geometry",
        rs=rs, kahler=kahler,
        base_lower=lower, base_upper=upper, base_point=point,
        fields=dict(doc.get("fields", {})),
        checks=tuple(doc.get("checks", ("hessian_transfer",))),
    )
