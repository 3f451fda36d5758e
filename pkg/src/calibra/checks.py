"""Check drivers: each check turns a scenario into residual records.

A record passes when ``residual <= tolerance``.  Records flagged as
hypothesis records carry the numerical verification of a precondition;
when one fails the conclusions depending on it are not evaluated.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh

from calibra import models
from calibra.calibration import (
    PHI_MONOMIALS,
    AlternatingForm,
    G2Structure,
    Plane,
    _associative_trace,
    associative_frames,
    coassociative_residual,
    g2_psh_defect,
    hphi_form,
    kahler_psh_defect,
    levi_form,
    levi_matrix,
    p_plane_psh_defect,
    random_orthonormal_pairs,
)
from calibra.expr import parse_expression
from calibra.manifold import (
    GeometryError,
    MetricField,
    ScalarField,
    curvature,
    field_on,
    geodesic,
    gram_schmidt,
    hessian,
    laplacian,
    orthonormal_frame,
    restricted_laplacian,
)
from calibra.scenarios import Scenario
from calibra.submersion import (
    Pushdown,
    base_convexity_check,
    covariant_fd_hessian,
    fibre_geometry,
    fibre_integral,
    fibre_supremum,
    fibre_volume,
    haar_pushdown,
    hessian_transfer_residual,
    horizontal_lift,
    pullback,
)
from calibra.variation import (
    FibreNotCoassociativeError,
    FibreNotLagrangianError,
    FibreNotMinimalError,
    FibreVariation,
    first_variation,
    integral_second_derivative,
    second_variation_g2,
    second_variation_kahler,
    second_variation_riemannian,
    volume_profile_fd,
)


class PaperTag(str, enum.Enum):
    HESSIAN_TRANSFER = "P2.2"
    HORIZONTAL_GEODESIC = "L2.1"
    RESTRICTED_LAPLACIAN = "P2.1"
    PROP_3_1 = "P3.1"
    LASSALLE = "T3.1"
    HADAMARD = "HADAMARD"
    RADIUS_EXAMPLE = "EX3"
    LEVI = "LEVI"
    KAHLER_PSH = "KPSH"
    G2_FORMS = "G2FORMS"
    G2_PSH = "G2PSH"
    HPHI = "HPHI"
    SQUARE_DISTANCE = "SQDIST"
    PROP_5_1 = "P5.1"
    REMARK_5_1 = "R5.1"
    PROP_5_2 = "P5.2"
    COR_5_1 = "C5.1"
    PROP_5_4 = "P5.4"
    FIRST_VARIATION = "EQ4"
    SECOND_VARIATION = "EQ5"
    SECOND_VARIATION_KAHLER = "EQ6"
    SECOND_VARIATION_G2 = "EQ7"
    COR_6_1 = "C6.1"
    PROP_7_1 = "P7.1"
    PROP_7_2 = "P7.2"
    PROP_7_3 = "P7.3"
    PROP_7_4 = "P7.4"
    THM_8_1 = "T8.1"
    COR_8_2 = "C8.2"
    RICCI_FORM = "RHO"
    LAGRANGIAN_DET = "LAGDET"


class UnknownCheckError(KeyError):
    pass


class CheckNotApplicableError(ValueError):
    pass


@dataclass
class CheckRecord:
    name: str
    paper_tag: PaperTag
    residual: float
    tolerance: float
    witness: dict | None = None
    hypothesis: bool = False

    @property
    def passed(self) -> bool:
        return bool(math.isfinite(self.residual) and self.residual <= self.tolerance)

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "paper_tag": self.paper_tag.value,
            "residual": _jsonable(self.residual),
            "tolerance": _jsonable(self.tolerance),
            "pass": self.passed,
        }
        witness = dict(self.witness or {})
        if self.hypothesis:
            witness["hypothesis"] = True
        if witness:
            out["witness"] = _jsonable(witness)
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, enum.Enum):
        return x.value
    return x


@dataclass
class CheckContext:
    seed: int = 0
    grid: int | None = None
    name: str = ""
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.rng is None:
            self.rng = check_rng(self.seed, self.name)


def check_rng(seed: int, name: str) -> np.random.Generator:
    """Independent stream per check, so results do not depend on run order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


# --- shared helpers ------------------------------------------------------------

HYP_TOL = 1e-8  # default tolerance for numerically verified hypotheses
TG_TOL = 1e-7


def _need(cond: bool, what: str, sc: Scenario):
    if not cond:
        raise CheckNotApplicableError(f"scenario {sc.id!r} has no {what}")


def _field(sc: Scenario, key: str, default=None):
    if key in sc.fields:
        return sc.fields[key]
    if default is not None:
        return default
    raise CheckNotApplicableError(f"scenario {sc.id!r} defines no field {key!r}")


def _total(sc: Scenario, source) -> ScalarField:
    if isinstance(source, ScalarField):
        return source
    if sc.rs is not None:
        return models.user_field(sc.rs, source)
    return ScalarField.from_expr(source, sc.metric.dim)


def _base(sc: Scenario, source) -> ScalarField:
    return field_on(sc.rs.base, source)


def _base_points(sc: Scenario, count: int, rng=None) -> np.ndarray:
    lo = np.asarray(sc.base_lower, float)
    hi = np.asarray(sc.base_upper, float)
    if len(lo) == 1:
        return np.linspace(lo[0], hi[0], count)[:, None]
    rng = rng if rng is not None else np.random.default_rng(0)
    return rng.uniform(lo, hi, size=(count, len(lo)))


def _fibre_params(rs, count: int) -> np.ndarray:
    per_dim = max(2, int(round(count ** (1.0 / rs.fibre_dim))))
    Y, _, _ = rs.fibre_grid(per_dim)
    return Y


def _unit(g: MetricField, p, v) -> np.ndarray:
    v = np.asarray(v, float)
    return v / math.sqrt(float(v @ g.matrix(p) @ v))


def _random_unit(g: MetricField, p, rng) -> np.ndarray:
    return _unit(g, p, rng.standard_normal(g.dim))


def _lambda_min(H, G) -> float:
    return float(eigh(0.5 * (H + H.T), G, eigvals_only=True)[0])


def _rich_hessian(F: Callable, b, metric: MetricField, step: float = 1e-3):
    """Richardson-extrapolated covariant FD Hessian and the step-halving gap."""
    H1 = covariant_fd_hessian(F, b, step, metric)
    H2 = covariant_fd_hessian(F, b, 2 * step, metric)
    return (4 * H1 - H2) / 3, float(np.abs(H1 - H2).max())


def _rich_second(g: Callable, step: float = 1e-3) -> float:
    """Richardson-extrapolated second derivative of ``g`` at 0."""
    g0 = g(0.0)
    d1 = (g(step) - 2 * g0 + g(-step)) / step ** 2
    d2 = (g(2 * step) - 2 * g0 + g(-2 * step)) / (2 * step) ** 2
    return (4 * d1 - d2) / 3


def _max_sectional(g: MetricField, p, rng, pairs: int = 16) -> float:
    cp = curvature(g, p)
    if g.dim < 2:
        return 0.0
    E = orthonormal_frame(g, p)
    vals = [cp.sectional(E[:, i], E[:, j]) for i in range(g.dim) for j in range(i + 1, g.dim)]
    for _ in range(pairs if g.dim > 2 else 0):
        vals.append(cp.sectional(rng.standard_normal(g.dim), rng.standard_normal(g.dim)))
    return float(max(vals))


def _max_ricci(g: MetricField, p) -> float:
    cp = curvature(g, p)
    return float(eigh(cp.ricci, cp.metric, eigvals_only=True)[-1])


def _fibre_tangent(rs, b, y) -> np.ndarray:
    geo = fibre_geometry(rs, b, y)
    return geo.tangent


def _implication(name: str, tag: PaperTag, rows: list, tol: float, hyp_tol: float = HYP_TOL,
                 what: str = "") -> CheckRecord:
    """Record for "hypothesis at b implies conclusion at b" over base points.

    ``rows`` holds ``(hyp_shortfall, conclusion_residual, point)``; points
    where the shortfall exceeds ``hyp_tol`` are vacuous.  If every point is
    vacuous the record becomes a failed hypothesis record.
    """
    live = [r for r in rows if r[0] <= hyp_tol]
    if not live:
        closest = min(rows, key=lambda r: r[0])
        return CheckRecord(f"{name}.hypothesis", tag, float(closest[0]), hyp_tol,
                           {"reason": what or "hypothesis fails at every sampled base point",
                            "closest_point": closest[2]}, hypothesis=True)
    worst = max(live, key=lambda r: r[1])
    return CheckRecord(name, tag, float(worst[1]), tol,
                       {"points": len(rows), "hypothesis_holds": len(live), "worst_point": worst[2]})


def _g2_of(sc: Scenario) -> G2Structure:
    tau = sc.fields.get("tau2")
    if not tau:
        return sc.g2
    coeffs = {}
    for word, src in tau.items():
        idx = tuple(int(ch) - 1 for ch in word)
        coeffs[idx] = ScalarField.from_expr(src, 7)
    return G2Structure(tau2=AlternatingForm(2, 7, coeffs))


# --- submersion geometry ---------------------------------------------------------


def check_hessian_transfer(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None, "submersion", sc)
    rs = sc.rs
    F = _base(sc, _field(sc, "F"))
    worst, where = 0.0, None
    for b in _base_points(sc, 20, ctx.rng):
        X = _random_unit(rs.base, b, ctx.rng)
        r = hessian_transfer_residual(rs, F, b, X, fibre_samples=32)
        if r >= worst:
            worst, where = r, b
    return [CheckRecord("hessian_transfer", PaperTag.HESSIAN_TRANSFER, worst, 1e-6,
                        {"base_points": 20, "fibre_samples": 32, "worst_point": where})]


def check_horizontal_geodesic(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None, "submersion", sc)
    rs = sc.rs
    b = np.asarray(sc.base_point, float)
    X = _random_unit(rs.base, b, ctx.rng)
    T = 0.3 * float(np.min(np.subtract(sc.base_upper, sc.base_lower)))
    bpts, _ = geodesic(rs.base, b, X, T, 256)
    vert, drift = 0.0, 0.0
    for y in _fibre_params(rs, 4):
        p = rs.fibre_point(b, y)
        pts, vel = geodesic(rs.total, p, horizontal_lift(rs, X, p), T, 256)
        for q, u in zip(pts[::16], vel[::16]):
            G = rs.total.matrix(q)
            v, _ = _split(rs, q, u)
            vert = max(vert, math.sqrt(max(0.0, v @ G @ v)) / math.sqrt(u @ G @ u))
        drift = max(drift, float(np.abs(rs.project(pts) - bpts).max()))
    return [
        CheckRecord("horizontal_geodesic.stays_horizontal", PaperTag.HORIZONTAL_GEODESIC, vert, 1e-6,
                    {"time": T, "steps": 256}),
        CheckRecord("horizontal_geodesic.projects", PaperTag.HORIZONTAL_GEODESIC, drift, 1e-6,
                    {"time": T, "steps": 256}),
    ]


def _split(rs, q, u):
    from calibra.submersion import split
    return split(rs, q, u)


def check_restricted_laplacian(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Intrinsic Laplacian on the fibre = tangential trace of Hess_M f + df(H)."""
    _need(sc.rs is not None, "submersion", sc)
    rs = sc.rs
    default = "x^2+x*y" if rs.cartesian is not None else "x1^2+x1*x2"
    f = _total(sc, _field(sc, "probe", default))
    worst = 0.0
    for b in _base_points(sc, 5, ctx.rng):
        s = rs.fibre(b)
        for y in _fibre_params(rs, 4):
            intrinsic, ambient = restricted_laplacian(s, f, y)
            geo = fibre_geometry(rs, b, y)
            _, grad, _ = f.eval(geo.point)
            worst = max(worst, abs(intrinsic - ambient - float(grad @ geo.mean_curvature)))
    return [CheckRecord("restricted_laplacian", PaperTag.RESTRICTED_LAPLACIAN, worst, 1e-8,
                        {"field": f.name})]


def check_radius_counterexample(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """The radius on the plane: vertical Hessian 1/r while the base Hessian of r vanishes."""
    _need(sc.rs is not None and sc.rs.name == "polar", "polar submersion", sc)
    rs = sc.rs
    F = _base(sc, "r")
    f = pullback(rs, F)
    worst, rows = 0.0, []
    for r in np.linspace(0.5, 3.0, 11):
        p = rs.fibre_point([r], [0.7])
        V = _unit(rs.total, p, [0.0, 1.0])
        vert = float(V @ hessian(rs.total, f, p) @ V)
        base = float(hessian(rs.base, F, [r])[0, 0])
        worst = max(worst, abs(vert - 1.0 / r), abs(base))
        rows.append([float(r), vert, base])
    return [CheckRecord("radius_counterexample", PaperTag.RADIUS_EXAMPLE, worst, 1e-10,
                        {"r_vertical_base": rows[::5]})]


def _subharmonic_shortfall(sc: Scenario, f, points) -> float:
    return max(0.0, -min(laplacian(sc.metric, f, p) for p in points))


def check_hadamard(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Sup and integral over circles of a subharmonic f are convex in t = log r."""
    _need(sc.rs is not None and sc.rs.name == "cylinder", "cylinder submersion", sc)
    rs = sc.rs
    points = ctx.grid or 64
    lo, hi = sc.base_lower[0], sc.base_upper[0]
    samples = [rs.fibre_point([t], [th]) for t in np.linspace(lo, hi, 7)
               for th in np.linspace(0, 2 * math.pi, 8, endpoint=False)]
    out = []
    for i, src in enumerate(_field(sc, "hadamard")):
        f = _total(sc, src)
        short = _subharmonic_shortfall(sc, f, samples)
        hyp = CheckRecord(f"hadamard.{i}.subharmonic", PaperTag.HADAMARD, short, HYP_TOL,
                          {"field": src}, hypothesis=True)
        out.append(hyp)
        if not hyp.passed:
            continue
        for kind in ("sup", "integral"):
            push = Pushdown("supremum" if kind == "sup" else "integral", rs, f)
            rep = base_convexity_check(lambda b: push(b), [lo], [hi], points, "midpoint", 1e-8)
            out.append(CheckRecord(f"hadamard.{i}.{kind}", PaperTag.HADAMARD, rep.residual, 1e-8,
                                   {"field": src, "worst_gap": rep.worst, "at": rep.witness,
                                    "checked": rep.checked}))
    return out


def check_lassalle(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Abelian circle action on a Kähler surface: an invariant function is PSH
    exactly where its pushdown is convex, and Haar averages of PSH functions
    have convex pushdowns."""
    _need(sc.rs is not None and sc.kahler is not None and sc.rs.m == 1, "Kähler circle quotient", sc)
    rs, k = sc.rs, sc.kahler
    out = []
    rows = []
    for src in ("t^2", "-t^2", "exp(t)", "t^3"):
        F = field_on(rs.base, src.replace("t", rs.base.coords[0] if rs.base.coords else "x1"))
        f = pullback(rs, F)
        for b in _base_points(sc, 11):
            tg = max(fibre_geometry(rs, b, y).second_fundamental_norm for y in _fibre_params(rs, 4))
            p = rs.fibre_point(b, rs.fibre_lower)
            psh = kahler_psh_defect(k, f, p, samples=64)[0]
            cvx = _lambda_min(hessian(rs.base, F, b), rs.base.matrix(b))
            agree = (psh >= -HYP_TOL) == (cvx >= -HYP_TOL)
            rows.append((max(0.0, tg - TG_TOL), 0.0 if agree else min(abs(psh), abs(cvx)), b))
    out.append(_implication("lassalle.invariant", PaperTag.LASSALLE, rows, 0.0, 0.0))
    if "hadamard" in sc.fields:
        lo, hi = sc.base_lower[0], sc.base_upper[0]
        for i, src in enumerate(sc.fields["hadamard"]):
            f = _total(sc, src)
            rep = base_convexity_check(lambda b: haar_pushdown(rs, f, b), [lo], [hi],
                                       ctx.grid or 64, "midpoint", 1e-8)
            out.append(CheckRecord(f"lassalle.haar.{i}", PaperTag.LASSALLE, rep.residual, 1e-8,
                                   {"field": src, "worst_gap": rep.worst}))
    return out


# --- proposition drivers ---------------------------------------------------------


def _hyp_record(name, tag, shortfall, tol=HYP_TOL, witness=None) -> CheckRecord:
    return CheckRecord(name, tag, float(shortfall), tol, witness, hypothesis=True)


def check_P3_1(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None, "submersion", sc)
    rs = sc.rs
    pts = list(_base_points(sc, 9, ctx.rng)) + [np.asarray(sc.base_point, float)]
    Fc = _base(sc, _field(sc, "F_convex", sc.fields.get("F")))
    F = _base(sc, _field(sc, "F"))
    fc, f = pullback(rs, Fc), pullback(rs, F)
    part1, part2, part3 = [], [], []
    for b in pts:
        Y = _fibre_params(rs, 4)
        P = [rs.fibre_point(b, y) for y in Y]
        # part 1: pi*F convex along the fibre forces F convex at b
        conv = min(_lambda_min(hessian(rs.total, fc, p), rs.total.matrix(p)) for p in P)
        lamB = _lambda_min(hessian(rs.base, Fc, b), rs.base.matrix(b))
        part1.append((max(0.0, -conv), max(0.0, -lamB), b))
        geo = [fibre_geometry(rs, b, y) for y in Y]
        tg = max(g.second_fundamental_norm for g in geo)
        HB = hessian(rs.base, F, b)
        _, gB, _ = F.eval(b)
        crit = float(np.abs(gB).max())
        res2 = 0.0
        for p in P:
            E = orthonormal_frame(rs.total, p)
            D = rs.dpi(p)
            HM = hessian(rs.total, f, p)
            res2 = max(res2, float(np.abs(E.T @ (HM - D.T @ HB @ D) @ E).max()))
        part2.append((max(0.0, min(tg - TG_TOL, crit - 1e-10)), res2, b))
        Hn = max(g.mean_curvature_norm for g in geo)
        lapB = float(np.einsum("ij,ij->", rs.base.inverse(b), HB))
        res3 = max(abs(laplacian(rs.total, f, p) - lapB) for p in P)
        part3.append((max(0.0, Hn - TG_TOL), res3, b))
    return [
        _implication("P3.1.part1", PaperTag.PROP_3_1, part1, 1e-8),
        _implication("P3.1.part2", PaperTag.PROP_3_1, part2, 1e-8, 0.0,
                     "no sampled fibre is totally geodesic or critical"),
        _implication("P3.1.part3", PaperTag.PROP_3_1, part3, 1e-6, 0.0, "no sampled fibre is minimal"),
    ]


def _lagrangian_residual(k, E, p) -> float:
    return float(np.abs(E.T @ k.omega_matrix(p) @ E).max())


def check_P5_1(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.kahler is not None, "Kähler structure", sc)
    k = sc.kahler
    n = k.dim
    sources = sc.fields.get("levi") or [sc.fields[key] for key in ("integral", "subharmonic", "convex", "psh")
                                        if key in sc.fields]
    _need(bool(sources), "test fields", sc)
    fields = [_total(sc, s) for s in sources]
    frames = []  # (point, Lagrangian frame, constant-on-plane indices)
    if sc.rs is not None:
        rs = sc.rs
        for b in _base_points(sc, 5, ctx.rng):
            for y in _fibre_params(rs, 2):
                p = rs.fibre_point(b, y)
                frames.append((p, _fibre_tangent(rs, b, y)))
    else:
        for _ in range(8):
            p = ctx.rng.uniform(-1, 1, n)
            frames.append((p, np.eye(n)[:, 0::2]))
    worst, lag = 0.0, 0.0
    for p, E in frames:
        G = k.metric.matrix(p)
        E = gram_schmidt(G, E)
        Jm = k.J_matrix(p)
        # a Lagrangian orthonormal frame e_j; together with J e_j it spans T_p
        lag = max(lag, _lagrangian_residual(k, E, p))
        for f in fields:
            total = sum(levi_form(k, f, p, E[:, j]) for j in range(E.shape[1]))
            worst = max(worst, abs(laplacian(k.metric, f, p) - total))
        del Jm
    out = [_hyp_record("P5.1.lagrangian", PaperTag.PROP_5_1, lag),
           CheckRecord("P5.1.part1", PaperTag.PROP_5_1, worst, 1e-10,
                       {"points": len(frames), "fields": len(fields)})]
    # part 2: f constant on a totally geodesic Lagrangian: PSH there iff convex there
    rows = []
    if sc.rs is not None:
        rs = sc.rs
        f = pullback(rs, _base(sc, _field(sc, "F")))
        for b in _base_points(sc, 9, ctx.rng):
            for y in _fibre_params(rs, 2):
                p = rs.fibre_point(b, y)
                geo = fibre_geometry(rs, b, y)
                _, g, _ = f.eval(p)
                short = max(_lagrangian_residual(k, geo.tangent, p),
                            min(geo.second_fundamental_norm - TG_TOL, float(np.abs(g).max()) - 1e-10), 0.0)
                rows.append((short, _equivalence_gap(k, f, p), b))
    else:
        for src in sc.fields.get("lagrangian_constant", []):
            f = _total(sc, src)
            for _ in range(6):
                p = np.zeros(n)
                p[0::2] = ctx.rng.uniform(-1, 1, n // 2)
                _, g, _ = f.eval(p)
                short = max(0.0, float(np.abs(g[0::2]).max()) - 1e-12)
                rows.append((short, _equivalence_gap(k, f, p), p))
    if rows:
        out.append(_implication("P5.1.part2", PaperTag.PROP_5_1, rows, 0.0, HYP_TOL))
    return out


def _equivalence_gap(k, f, p) -> float:
    """0 when 'PSH at p' and 'convex at p' agree, else the smaller margin."""
    psh = kahler_psh_defect(k, f, p, samples=64)[0]
    cvx = p_plane_psh_defect(k.metric, f, p, 1)
    if (psh >= -HYP_TOL) == (cvx >= -HYP_TOL):
        return 0.0
    return min(abs(psh), abs(cvx))


class _Invariant:
    """``F(b) = f(fibre_point(b, y0))``; invariance is verified separately."""

    def __init__(self, rs, f):
        self.rs, self.f = rs, f
        self.y0 = rs.fibre_lower

    def __call__(self, b) -> float:
        return float(self.f(self.rs.fibre_point(np.atleast_1d(b), self.y0)))


def _oscillation(rs, f, b, per_dim: int) -> float:
    Y, _, _ = rs.fibre_grid(per_dim)
    vals = f(rs.fibre_point(b, Y))
    return float(vals.max() - vals.min())


def check_P5_2(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.kahler is not None, "Kähler submersion", sc)
    rs, k = sc.rs, sc.kahler
    f = _total(sc, _field(sc, "invariant_psh"))
    F = _Invariant(rs, f)
    pts = _base_points(sc, 21, ctx.rng)
    osc = max(_oscillation(rs, f, b, 16 if rs.fibre_dim < 3 else 4) for b in pts)
    out = [_hyp_record("P5.2.invariant", PaperTag.PROP_5_2, osc)]
    if osc > HYP_TOL:
        return out
    ident, equiv, part2 = [], [], []
    for b in pts:
        Y = _fibre_params(rs, 4)
        geo = [fibre_geometry(rs, b, y) for y in Y]
        P = [g.point for g in geo]
        lag = max(_lagrangian_residual(k, g.tangent, g.point) for g in geo)
        tg = max(g.second_fundamental_norm for g in geo)
        Hn = max(g.mean_curvature_norm for g in geo)
        HB, _ = _rich_hessian(F, b, rs.base)
        GB = rs.base.matrix(b)
        crit = max(float(np.abs(f.eval(p)[1]).max()) for p in P)
        short1 = max(lag, min(tg - TG_TOL, crit - 1e-10), 0.0)
        # Levi form of f on the horizontal lift vs base Hessian of F
        gap = 0.0
        for j in range(rs.m):
            X = _unit(rs.base, b, np.eye(rs.m)[j])
            for p in P:
                gap = max(gap, abs(levi_form(k, f, p, horizontal_lift(rs, X, p)) - X @ HB @ X))
        ident.append((short1, gap, b))
        psh = min(kahler_psh_defect(k, f, p, samples=64)[0] for p in P)
        cvx = _lambda_min(HB, GB)
        agree = (psh >= -HYP_TOL) == (cvx >= -1e-6)
        equiv.append((short1, 0.0 if agree else min(abs(psh), abs(cvx)), b))
        lapB = float(np.einsum("ij,ij->", np.linalg.inv(GB), HB))
        part2.append((max(lag, Hn - TG_TOL, max(0.0, -psh)), max(0.0, -lapB), b))
    out += [
        _implication("P5.2.identity", PaperTag.PROP_5_2, ident, 1e-6),
        _implication("P5.2.equivalence", PaperTag.PROP_5_2, equiv, 0.0),
        _implication("P5.2.part2", PaperTag.PROP_5_2, part2, 1e-6),
    ]
    return out


def _bisect(d: Callable, a: float, b: float, tol: float = 1e-10) -> float:
    da = d(a)
    while b - a > tol:
        c = 0.5 * (a + b)
        dc = d(c)
        if dc == 0.0:
            return c
        if (dc > 0) == (da > 0):
            a, da = c, dc
        else:
            b = c
    return 0.5 * (a + b)


def _critical_points(d: Callable, grid: np.ndarray) -> list[float]:
    """Sign changes of ``d`` on the grid, refined by bisection."""
    vals = np.array([d(t) for t in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_bisect(d, float(grid[i]), float(grid[i + 1])))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def check_C5_1(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.kahler is not None and sc.rs.m == 1, "Kähler submersion onto a line", sc)
    rs, k = sc.rs, sc.kahler
    f = _total(sc, _field(sc, "invariant_psh"))
    F = _Invariant(rs, f)
    lo, hi = float(sc.base_lower[0]), float(sc.base_upper[0])
    grid = np.linspace(lo, hi, 201)
    lag, strict, osc = 0.0, math.inf, 0.0
    for b in grid[::20]:
        for y in _fibre_params(rs, 4):
            geo = fibre_geometry(rs, [b], y)
            lag = max(lag, _lagrangian_residual(k, geo.tangent, geo.point))
            strict = min(strict, kahler_psh_defect(k, f, geo.point, samples=64)[0])
        osc = max(osc, _oscillation(rs, f, [b], 16))
    out = [
        _hyp_record("C5.1.lagrangian", PaperTag.COR_5_1, lag),
        _hyp_record("C5.1.invariant", PaperTag.COR_5_1, osc),
        _hyp_record("C5.1.strictly_psh", PaperTag.COR_5_1, max(0.0, HYP_TOL - strict), 0.0,
                    {"min_levi_defect": strict}),
    ]
    if not all(r.passed for r in out):
        return out
    h = 1e-4

    def dF(t):
        return (F([t + h]) - F([t - h])) / (2 * h)

    crit = _critical_points(dF, grid)
    worst, info = 0.0, []
    for c in crit:
        H, _ = _rich_hessian(F, [c], rs.base)
        lam = _lambda_min(H, rs.base.matrix([c]))
        worst = max(worst, max(0.0, -lam))
        info.append({"b": c, "hessian": lam, "local_min": lam > 0})
    out.append(CheckRecord("C5.1", PaperTag.COR_5_1, worst, 1e-8,
                           {"critical_points": info, "count": len(crit)}))
    return out


def check_P5_4(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.g2 is not None, "G2 submersion", sc)
    rs, g2 = sc.rs, sc.g2
    f = pullback(rs, _base(sc, _field(sc, "F")))
    F = _Invariant(rs, f)
    pts = _base_points(sc, 20, ctx.rng)
    equiv, part2 = [], []
    for b in pts:
        Y = _fibre_params(rs, 2)[:2]
        geo = [fibre_geometry(rs, b, y) for y in Y]
        coas = max(coassociative_residual(Plane(g.point, gram_schmidt(g.ambient_metric, g.tangent)), g2)
                   for g in geo)
        tg = max(g.second_fundamental_norm for g in geo)
        Hn = max(g.mean_curvature_norm for g in geo)
        crit = max(float(np.abs(f.eval(g.point)[1]).max()) for g in geo)
        HB = covariant_fd_hessian(F, b, 1e-3, rs.base)
        cvx = _lambda_min(HB, rs.base.matrix(b))
        defect = min(g2_psh_defect(g2, f, g.point, samples=256)[0] for g in geo)
        agree = (defect >= -HYP_TOL) == (cvx >= -1e-6)
        short = max(coas, min(tg - TG_TOL, crit - 1e-10), 0.0)
        equiv.append((short, 0.0 if agree else min(abs(defect), abs(cvx)), b))
        lapB = float(np.trace(np.linalg.solve(rs.base.matrix(b), HB)))
        part2.append((max(coas, Hn - TG_TOL, max(0.0, -defect)), max(0.0, -lapB), b))
    rec = _implication("P5.4.equivalence", PaperTag.PROP_5_4, equiv, 0.0)
    if rec.witness is not None and not rec.hypothesis:
        rec.witness["convex_points"] = int(sum(
            _lambda_min(covariant_fd_hessian(F, b, 1e-3, rs.base), rs.base.matrix(b)) >= -1e-6 for b in pts))
    return [
        _hyp_record("P5.4.coassociative", PaperTag.PROP_5_4,
                    max(coassociative_residual(Plane(p, gram_schmidt(np.eye(7), _fibre_tangent(rs, b, y))), g2)
                        for b in pts[:3] for y in _fibre_params(rs, 2)[:1] for p in [rs.fibre_point(b, y)]),
                    1e-9),
        rec,
        _implication("P5.4.part2", PaperTag.PROP_5_4, part2, 1e-6),
    ]


def _c6_directions(rs, b, rng) -> list[np.ndarray]:
    dirs = [_unit(rs.base, b, np.eye(rs.m)[0])]
    if rs.m > 1:
        dirs.append(_random_unit(rs.base, b, rng))
    return dirs


def check_C6_1(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Volume is convex along horizontal variations under each curvature hypothesis."""
    _need(sc.rs is not None and sc.rs.compact_fibres, "submersion with compact fibres", sc)
    rs = sc.rs
    b = np.asarray(sc.base_point, float)
    Y = _fibre_params(rs, 4)[:4]
    geo = [fibre_geometry(rs, b, y) for y in Y]
    P = [g.point for g in geo]
    tg = max(g.second_fundamental_norm for g in geo)
    Hn = max(g.mean_curvature_norm for g in geo)
    out = []
    dirs = _c6_directions(rs, b, ctx.rng)

    def conclude(name, compute):
        worst, vals = 0.0, []
        for X in dirs:
            val = compute(FibreVariation(rs, b, X))
            vals.append(val)
            worst = max(worst, max(0.0, -val))
        out.append(CheckRecord(name, PaperTag.COR_6_1, worst, 1e-8, {"second_variation": vals}))

    sec = max(_max_sectional(rs.total, p, ctx.rng) for p in P)
    hyp = _hyp_record("C6.1.part1.hypotheses", PaperTag.COR_6_1, max(0.0, sec, tg - TG_TOL),
                      witness={"max_sectional": sec, "second_fundamental": tg})
    out.append(hyp)
    if hyp.passed:
        conclude("C6.1.part1", lambda v: second_variation_riemannian(v, t_step=None).second_analytic)
    ric = max(_max_ricci(rs.total, p) for p in P)
    if sc.kahler is not None and 2 * rs.fibre_dim == rs.n:
        lag = max(_lagrangian_residual(sc.kahler, g.tangent, g.point) for g in geo)
        hyp = _hyp_record("C6.1.part2.hypotheses", PaperTag.COR_6_1, max(0.0, ric, Hn - TG_TOL, lag),
                          witness={"max_ricci": ric, "mean_curvature": Hn, "lagrangian": lag})
        out.append(hyp)
        if hyp.passed:
            conclude("C6.1.part2", lambda v: second_variation_kahler(v, sc.kahler, t_step=None).second_analytic)
    if sc.g2 is not None and rs.fibre_dim == 4:
        g2 = _g2_of(sc)
        coas = max(coassociative_residual(Plane(g.point, gram_schmidt(g.ambient_metric, g.tangent)), g2)
                   for g in geo)
        hyp = _hyp_record("C6.1.part3.hypotheses", PaperTag.COR_6_1, max(0.0, ric, tg - TG_TOL, coas),
                          witness={"max_ricci": ric, "second_fundamental": tg, "coassociative": coas})
        out.append(hyp)
        if hyp.passed:
            conclude("C6.1.part3", lambda v: second_variation_g2(v, g2, t_step=None).second_analytic)
    return out


# --- integral and supremum pushdowns ---------------------------------------------


def _fibre_state(sc, b, f, samples: int):
    """Per-fibre quantities used by the pushdown hypotheses."""
    rs = sc.rs
    Y = _fibre_params(rs, samples)
    geo = [fibre_geometry(rs, b, y) for y in Y]
    P = [g.point for g in geo]
    return {
        "geo": geo,
        "points": P,
        "tg": max(g.second_fundamental_norm for g in geo),
        "H": max(g.mean_curvature_norm for g in geo),
        "fmin": min(float(f(p)) for p in P),
        "convex": min(_lambda_min(hessian(rs.total, f, p), rs.total.matrix(p)) for p in P),
        "subharmonic": min(laplacian(rs.total, f, p) for p in P),
        "osc": max(float(f(p)) for p in P) - min(float(f(p)) for p in P),
    }


def _pushdown_curvature(F, b, metric, richardson: bool = True):
    if richardson:
        H, gap = _rich_hessian(F, b, metric)
    else:
        H, gap = covariant_fd_hessian(F, b, 1e-3, metric), math.nan
    G = metric.matrix(b)
    return _lambda_min(H, G), float(np.trace(np.linalg.solve(G, H))), gap


def _identity_record(name, tag, sc, f, formula, structure=None, tau2=None, rng=None) -> CheckRecord:
    rs = sc.rs
    b = np.asarray(sc.base_point, float)
    X = _unit(rs.base, b, np.eye(rs.m)[0])
    v = FibreVariation(rs, b, X)
    grid = max(v.grid, 32)
    analytic = integral_second_derivative(v, f, formula, structure, tau2)
    fd = _rich_second(lambda t: fibre_integral(rs, f, v.base_point(t), grid))
    scale = max(1.0, abs(fibre_integral(rs, f, b, grid)))
    return CheckRecord(name, tag, abs(analytic["total"] - fd), 1e-6 * scale,
                       {"analytic": analytic, "fd": fd, "scale": scale})


def _pushdown_conclusions(prefix, tag, sc, kinds, points, hypothesis, tol=1e-6):
    """For each field kind: hypothesis(b, state, kind) -> shortfall; conclusion
    is convexity ('convex') or subharmonicity ('subharmonic') of F = int f."""
    rs = sc.rs
    out = []
    cache = {}  # kinds often share a source; fibre integrals are the expensive part
    for kind in kinds:
        if kind not in sc.fields:
            continue
        f = _total(sc, sc.fields[kind])
        src = repr(sc.fields[kind])

        def F(b, f=f, src=src):
            key = (src, tuple(np.asarray(b, float).tolist()))
            if key not in cache:
                cache[key] = fibre_integral(rs, f, b, _quad_grid(rs))
            return cache[key]
        rows = []
        for b in points:
            st = _fibre_state(sc, b, f, 16)
            short = hypothesis(b, st, kind)
            if short > HYP_TOL:
                rows.append((short, 0.0, b))
                continue
            # T^4 quadrature is costly: single-step FD Hessian there
            lam, lap, _ = _pushdown_curvature(F, b, rs.base, rs.fibre_dim < 3)
            rows.append((short, max(0.0, -(lam if kind == "convex" else lap)), b))
        out.append(_implication(f"{prefix}.{kind}", tag, rows, tol))
    return out


def _quad_grid(rs) -> int:
    return 64 if rs.fibre_dim <= 2 else 32


def check_P7_1(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.rs.compact_fibres, "submersion with compact fibres", sc)
    rs = sc.rs
    out = []
    if "integral" in sc.fields:
        out.append(_identity_record("P7.1.identity", PaperTag.PROP_7_1, sc,
                                    _total(sc, sc.fields["integral"]), "riemannian"))
    points = _base_points(sc, 7, ctx.rng)
    g = rs.total

    def part1(b, st, kind):
        sec = max(_max_sectional(g, p, ctx.rng) for p in st["points"][:4])
        return max(0.0, sec, st["tg"] - TG_TOL, -st["fmin"], -st[kind])

    vol0 = {}

    def part2(b, st, kind):
        key = tuple(np.round(b, 12))
        if key not in vol0:
            V = [fibre_volume(rs, b + s * e, _quad_grid(rs)) for e in np.eye(rs.m) * 1e-3 for s in (-1, 1)]
            V0 = fibre_volume(rs, b, _quad_grid(rs))
            vol0[key] = max(abs(x - V0) for x in V) / V0
        return max(0.0, vol0[key] - 1e-10, -st["convex"])

    def part3(b, st, kind):
        return max(0.0, st["H"] - TG_TOL, -st["subharmonic"])

    out += _pushdown_conclusions("P7.1.part1", PaperTag.PROP_7_1, sc, ("convex", "subharmonic"), points, part1)
    out += _pushdown_conclusions("P7.1.part2", PaperTag.PROP_7_1, sc, ("convex",), points, part2)
    out += _pushdown_conclusions("P7.1.part3", PaperTag.PROP_7_1, sc, ("subharmonic",), points, part3)
    return out


def check_P7_2(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.kahler is not None and sc.rs.compact_fibres, "Kähler submersion", sc)
    rs, k = sc.rs, sc.kahler
    out = []
    if "integral" in sc.fields:
        out.append(_identity_record("P7.2.identity", PaperTag.PROP_7_2, sc,
                                    _total(sc, sc.fields["integral"]), "kahler", k))

    def hyp(b, st, kind):
        ric = max(_max_ricci(rs.total, p) for p in st["points"][:4])
        lag = max(_lagrangian_residual(k, gg.tangent, gg.point) for gg in st["geo"])
        return max(0.0, ric, lag, st["H"] - TG_TOL, -st["fmin"], -st[kind])

    out += _pushdown_conclusions("P7.2", PaperTag.PROP_7_2, sc, ("convex", "subharmonic"),
                                 _base_points(sc, 7, ctx.rng), hyp)
    return out


def check_P7_3(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.g2 is not None, "G2 submersion", sc)
    rs = sc.rs
    g2 = _g2_of(sc)
    out = []
    if "integral" in sc.fields:
        out.append(_identity_record("P7.3.identity", PaperTag.PROP_7_3, sc,
                                    _total(sc, sc.fields["integral"]), "g2", g2, g2.tau2))

    def hyp(b, st, kind):
        ric = max(_max_ricci(rs.total, p) for p in st["points"][:2])
        coas = max(coassociative_residual(Plane(gg.point, gram_schmidt(gg.ambient_metric, gg.tangent)), g2)
                   for gg in st["geo"][:2])
        cond = -st["convex"] if kind == "convex" else max(-st["subharmonic"], st["osc"])
        return max(0.0, ric, coas, st["tg"] - TG_TOL, -st["fmin"], cond)

    # the T^4 fibre integral is the expensive part: one base point
    out += _pushdown_conclusions("P7.3", PaperTag.PROP_7_3, sc, ("convex", "subharmonic"),
                                 [np.asarray(sc.base_point, float)], hyp)
    return out


def _orbit_points(sc, count, rng):
    rs = sc.rs
    pts = []
    for b in _base_points(sc, count, rng):
        y = rs.fibre_lower + rng.uniform(0, 1, rs.fibre_dim) * (rs.fibre_upper - rs.fibre_lower)
        pts.append(rs.fibre_point(b, y))
    return pts


def check_P7_4(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Haar averages and suprema over torus orbits preserve convexity and PSH."""
    _need(sc.rs is not None and sc.rs.compact_fibres and sc.kahler is not None,
          "Kähler torus quotient", sc)
    rs, k = sc.rs, sc.kahler
    g = rs.total
    pts = _orbit_points(sc, 6, ctx.rng)
    out = []
    flat = max(float(np.abs(curvature(g, p).riemann).max()) for p in pts)
    for kind in ("convex", "psh"):
        if kind not in sc.fields:
            continue
        f = _total(sc, sc.fields[kind])
        # hypothesis on orbits through the test points
        short = 0.0
        for p in pts:
            b = rs.project(p)
            for y in _fibre_params(rs, 16):
                q = rs.fibre_point(b, y)
                val = (_lambda_min(hessian(g, f, q), g.matrix(q)) if kind == "convex"
                       else kahler_psh_defect(k, f, q, samples=64)[0])
                short = max(short, -val)
        hyp = _hyp_record(f"P7.4.{kind}.hypothesis", PaperTag.PROP_7_4, short)
        out.append(hyp)
        if not hyp.passed:
            continue
        haar = lambda b, f=f: haar_pushdown(rs, f, b)  # noqa: E731
        sup = lambda b, f=f: fibre_supremum(rs, f, b)  # noqa: E731
        u_haar = lambda p: haar(rs.project(p))  # noqa: E731
        u_sup = lambda p: sup(rs.project(p))  # noqa: E731
        worst = 0.0
        for p in pts:
            H, _ = _rich_hessian(u_haar, p, g)
            if kind == "convex":
                worst = max(worst, -_lambda_min(H, g.matrix(p)))
            else:
                Jm = k.J_matrix(p)
                worst = max(worst, -_lambda_min(H + Jm.T @ H @ Jm, g.matrix(p)))
        out.append(CheckRecord(f"P7.4.{kind}.haar", PaperTag.PROP_7_4, max(0.0, worst), 1e-6,
                               {"points": len(pts)}))
        if kind == "convex":
            worst = 0.0
            for p in pts:
                for _ in range(4):
                    v = _random_unit(g, p, ctx.rng)
                    a, _ = geodesic(g, p, v, 0.2, 32)
                    c, _ = geodesic(g, p, -v, 0.2, 32)
                    worst = max(worst, -(0.5 * (u_sup(a[-1]) + u_sup(c[-1])) - u_sup(p)))
            out.append(CheckRecord("P7.4.convex.sup", PaperTag.PROP_7_4, max(0.0, worst), 1e-6,
                                   {"mode": "midpoint along geodesics"}))
        else:
            hyp = _hyp_record("P7.4.psh.sup.flat", PaperTag.PROP_7_4, flat, 1e-10)
            out.append(hyp)
            if hyp.passed:
                worst = 0.0
                angles = np.linspace(0, 2 * math.pi, 16, endpoint=False)
                for p in pts:
                    X = _random_unit(g, p, ctx.rng)
                    JX = k.J_matrix(p) @ X
                    vals = [u_sup(geodesic(g, p, 0.1 * (math.cos(a) * X + math.sin(a) * JX), 1.0, 16)[0][-1])
                            for a in angles]
                    worst = max(worst, -(float(np.mean(vals)) - u_sup(p)))
                out.append(CheckRecord("P7.4.psh.sup", PaperTag.PROP_7_4, max(0.0, worst), 1e-6,
                                       {"mode": "sub-mean value on geodesic discs", "radius": 0.1}))
    return out


# --- variation of fibre volume -----------------------------------------------


def check_first_variation(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.rs.compact_fibres, "submersion with compact fibres", sc)
    rs = sc.rs
    b = np.asarray(sc.base_point, float)
    out = []
    dirs = _c6_directions(rs, b, ctx.rng)
    for i, X in enumerate(dirs[:1] if rs.fibre_dim >= 3 else dirs):
        v = FibreVariation(rs, b, X)
        analytic = first_variation(v)
        f1, _ = volume_profile_fd(v, 1e-3)
        f2, _ = volume_profile_fd(v, 2e-3)
        fd = (4 * f1 - f2) / 3
        scale = max(1.0, v.volume())
        out.append(CheckRecord(f"first_variation.{i}", PaperTag.FIRST_VARIATION, abs(analytic - fd),
                               1e-6 * scale, {"analytic": analytic, "fd": fd}))
    return out


def _variation_records(prefix, tag, rep) -> list[CheckRecord]:
    return [
        CheckRecord(prefix, tag, rep.gap, rep.tolerance, rep.as_dict()),
        CheckRecord(f"{prefix}.richardson", tag, rep.richardson_gap, max(1e-3, 1e-2 * abs(rep.second_fd)),
                    {"fine": rep.second_fd, "coarse": rep.second_fd_coarse}),
    ]


def check_second_variation(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.rs.compact_fibres, "submersion with compact fibres", sc)
    rs = sc.rs
    b = np.asarray(sc.base_point, float)
    v = FibreVariation(rs, b, _unit(rs.base, b, np.eye(rs.m)[0]))
    return _variation_records("second_variation", PaperTag.SECOND_VARIATION, second_variation_riemannian(v))


def check_second_variation_kahler(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.kahler is not None, "Kähler submersion", sc)
    rs = sc.rs
    b = np.asarray(sc.base_point, float)
    v = FibreVariation(rs, b, _unit(rs.base, b, np.eye(rs.m)[0]))
    try:
        rep = second_variation_kahler(v, sc.kahler)
    except (FibreNotLagrangianError, FibreNotMinimalError) as exc:
        return [_hyp_record("second_variation_kahler.hypothesis", PaperTag.SECOND_VARIATION_KAHLER, 1.0, 0.0,
                            {"reason": str(exc)})]
    riem = second_variation_riemannian(v, t_step=None)
    return _variation_records("second_variation_kahler", PaperTag.SECOND_VARIATION_KAHLER, rep) + [
        CheckRecord("second_variation_kahler.vs_riemannian", PaperTag.SECOND_VARIATION_KAHLER,
                    abs(rep.second_analytic - riem.second_analytic), 1e-5,
                    {"kahler": rep.second_analytic, "riemannian": riem.second_analytic})]


def check_second_variation_g2(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.g2 is not None, "G2 submersion", sc)
    rs = sc.rs
    g2 = _g2_of(sc)
    b = np.asarray(sc.base_point, float)
    v = FibreVariation(rs, b, _unit(rs.base, b, np.eye(rs.m)[0]))
    try:
        rep = second_variation_g2(v, g2)
    except FibreNotCoassociativeError as exc:
        return [_hyp_record("second_variation_g2.hypothesis", PaperTag.SECOND_VARIATION_G2, 1.0, 0.0,
                            {"reason": str(exc)})]
    # the formula assumes the whole family stays coassociative: sample it
    worst, where = 0.0, 0.0
    for t in (-0.1, -1e-3, 1e-3, 0.1):
        bt = v.base_point(t)
        for y in _fibre_params(rs, 4):
            gg = fibre_geometry(rs, bt, y)
            r = coassociative_residual(Plane(gg.point, gram_schmidt(gg.ambient_metric, gg.tangent)), g2)
            if r > worst:
                worst, where = r, t
    return [_hyp_record("second_variation_g2.family", PaperTag.SECOND_VARIATION_G2, worst, 1e-9,
                        {"times": [-0.1, -1e-3, 1e-3, 0.1], "worst_time": where})] + \
        _variation_records("second_variation_g2", PaperTag.SECOND_VARIATION_G2, rep) + [
        CheckRecord("second_variation_g2.stokes", PaperTag.SECOND_VARIATION_G2,
                    abs(rep.terms["stokes"]), 1e-8, {"tau2": sorted(sc.fields.get("tau2", {}))})]


# --- toric volume ---------------------------------------------------------------


def check_toric_volume(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Minimal orbits of a circle action, curvature-volume identities and their type."""
    _need(sc.rs is not None and sc.rs.m == 1 and sc.rs.fibre_dim == 1 and sc.rs.compact_fibres,
          "circle action on a surface", sc)
    rs = sc.rs
    lo, hi = float(sc.base_lower[0]), float(sc.base_upper[0])
    grid = np.linspace(lo, hi, ctx.grid or 512)
    vol = lambda b: fibre_volume(rs, np.atleast_1d(b), 64)  # noqa: E731
    vols = np.array([vol(b) for b in grid])
    out = [_hyp_record("toric_volume.free_action", PaperTag.THM_8_1, max(0.0, 1e-12 - vols.min()), 0.0,
                       {"min_volume": float(vols.min())})]
    if not out[0].passed:
        return out
    if getattr(rs, "profile", None) is not None:
        dr = rs.profile.diff(0)
        d = lambda b: float(dr(b))  # noqa: E731
    else:
        h = 1e-4 * (hi - lo)
        d = lambda b: (vol(b + h) - vol(b - h)) / (2 * h)  # noqa: E731
    dvals = np.array([d(b) for b in grid])
    y0 = rs.fibre_lower
    imax = int(np.argmax(vols))
    maximizer = {"b": float(grid[imax]), "volume": float(vols[imax]),
                 "interior": 0 < imax < len(grid) - 1}

    def orbit_curvature(b):
        p = rs.fibre_point([b], y0)
        X = horizontal_lift(rs, _unit(rs.base, [b], [1.0]), p)
        cp = curvature(rs.total, p)
        return float(X @ cp.ricci @ X), cp.scalar

    if np.abs(dvals).max() <= 1e-10 * max(1.0, np.abs(vols).max()):
        ric = max(abs(orbit_curvature(b)[0]) for b in grid[::16])
        out.append(CheckRecord("toric_volume.ricci_flat", PaperTag.THM_8_1, ric, 1e-10,
                               {"minimal_family": [lo, hi], "maximizer": maximizer}))
        return out
    crit = _critical_points(d, grid)
    if not crit:
        out.append(CheckRecord("toric_volume.orbits", PaperTag.THM_8_1, 0.0, 0.0,
                               {"minimal_orbits": [], "maximizer": maximizer,
                                "boundary_slope": [float(dvals[0]), float(dvals[-1])]}))
        return out
    res_ric, res_s, margin, info = 0.0, 0.0, math.inf, []
    for c in crit:
        ric, scal = orbit_curvature(c)
        HL, _ = _rich_hessian(lambda b: -math.log(vol(b)), [c], rs.base)
        HV, _ = _rich_hessian(vol, [c], rs.base)
        gB = float(rs.base.matrix([c])[0, 0])
        hl, hv = float(HL[0, 0]) / gB, float(HV[0, 0]) / gB
        V = vol(c)
        res_ric = max(res_ric, abs(ric - hl))
        res_s = max(res_s, abs(scal + 2 * hv / V))
        kind = ("strict_local_min" if ric < -HYP_TOL else "strict_local_max" if ric > HYP_TOL
                else "degenerate")
        signed = hv if kind == "strict_local_min" else -hv if kind == "strict_local_max" else -math.inf
        margin = min(margin, signed)
        info.append({"b": c, "volume": V, "ricci": ric, "scalar": scal, "hess_volume": hv, "type": kind})
    wit = {"minimal_orbits": info, "maximizer": maximizer}
    out += [
        CheckRecord("toric_volume.ricci", PaperTag.THM_8_1, res_ric, 1e-5, wit),
        CheckRecord("toric_volume.scalar", PaperTag.THM_8_1, res_s, 1e-5),
        CheckRecord("toric_volume.classification", PaperTag.COR_8_2, max(0.0, 0.1 - margin), 0.0,
                    {"margin": margin}),
    ]
    return out


# --- Kähler identities --------------------------------------------------------


def _kahler_points(sc: Scenario, count: int, rng) -> list[np.ndarray]:
    if sc.rs is not None:
        return _orbit_points(sc, count, rng)
    return [rng.uniform(-1, 1, sc.metric.dim) for _ in range(count)]


def check_lagrangian_determinant(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.rs is not None and sc.kahler is not None and sc.rs.compact_fibres
          and 2 * sc.rs.fibre_dim == sc.rs.n, "Kähler torus quotient with half-dimensional orbits", sc)
    rs, k = sc.rs, sc.kahler
    lag, h2g, herm, dets = 0.0, 0.0, 0.0, []
    pts = _base_points(sc, 5, ctx.rng)
    for b in pts:
        for y in _fibre_params(rs, 4):
            geo = fibre_geometry(rs, b, y)
            p, E = geo.point, geo.tangent
            G, Jm = rs.total.matrix(p), k.J_matrix(p)
            JE = Jm @ E
            g = E.T @ G @ E
            h = (g + JE.T @ G @ JE) + 1j * (E.T @ G @ JE - JE.T @ G @ E)
            lag = max(lag, _lagrangian_residual(k, E, p))
            h2g = max(h2g, float(np.abs(h - 2 * g).max()))
            herm = max(herm, float(np.abs(h - h.conj().T).max()))
        dets.append(float(np.linalg.det(h).real))
    vols = np.array([fibre_volume(rs, b, 64) for b in pts])
    roots = np.sqrt(np.array(dets))
    c = vols[0] / roots[0]
    rel = float(np.max(np.abs(vols - c * roots) / vols))
    return [
        _hyp_record("lagrangian_determinant.lagrangian", PaperTag.LAGRANGIAN_DET, lag),
        CheckRecord("lagrangian_determinant.h_equals_2g", PaperTag.LAGRANGIAN_DET, h2g, 1e-10),
        CheckRecord("lagrangian_determinant.hermitian", PaperTag.LAGRANGIAN_DET, herm, 1e-12),
        CheckRecord("lagrangian_determinant.volume", PaperTag.LAGRANGIAN_DET, rel, 1e-8,
                    {"constant": float(c)}),
    ]


def check_ricci_two_form(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.kahler is not None, "Kähler structure", sc)
    k = sc.kahler
    anti, match, ratios = 0.0, 0.0, []
    for p in _kahler_points(sc, 6, ctx.rng):
        cp = curvature(k.metric, p)
        Jm = k.J_matrix(p)
        G = cp.metric
        for _ in range(4):
            X, Y = ctx.rng.standard_normal((2, k.dim))
            rho = lambda a, b: float((Jm @ a) @ cp.ricci @ b)  # noqa: E731
            anti = max(anti, abs(rho(X, Y) + rho(Y, X)))
            match = max(match, abs(rho(X, Jm @ X) - X @ cp.ricci @ X))
            ratios.append(rho(X, Jm @ X) / float(X @ G @ X))
    return [
        CheckRecord("ricci_two_form.antisymmetry", PaperTag.RICCI_FORM, anti, 1e-10),
        CheckRecord("ricci_two_form.diagonal", PaperTag.RICCI_FORM, match, 1e-8,
                    {"rho_X_JX_over_norm": [min(ratios), max(ratios)]}),
    ]


def check_square_distance(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Squared distance to a point, a line and a circle in flat space.

    On the submanifold the Hessian is PSD with the tangent directions in its
    kernel; inside the unit circle the tangential eigenvalue turns negative.
    """
    cases = [
        ("origin", "x1^2+x2^2", 2, [np.array([0.0, 0.0])], []),
        ("z_axis", "x1^2+x2^2", 3, [np.array([0.0, 0.0, z]) for z in (-1.0, 0.3, 2.0)],
         [np.array([0.0, 0.0, 1.0])] * 3),
        ("unit_circle", "(sqrt(x1^2+x2^2)-1)^2", 2,
         [np.array([math.cos(a), math.sin(a)]) for a in (0.0, 1.0, 2.5)],
         [np.array([-math.sin(a), math.cos(a)]) for a in (0.0, 1.0, 2.5)]),
    ]
    out = []
    for name, src, n, pts, tangents in cases:
        g = MetricField.identity(n)
        f = ScalarField.from_expr(src, n)
        neg, kern, eig = 0.0, 0.0, None
        for i, p in enumerate(pts):
            H = hessian(g, f, p)
            w = np.linalg.eigvalsh(H)
            eig = w
            neg = max(neg, -w[0])
            if tangents:
                t = tangents[i]
                kern = max(kern, abs(t @ H @ t))
        out.append(CheckRecord(f"square_distance.{name}", PaperTag.SQUARE_DISTANCE, max(neg, kern), 1e-8,
                               {"eigenvalues": eig}))
    g = MetricField.identity(2)
    f = ScalarField.from_expr("(sqrt(x1^2+x2^2)-1)^2", 2)
    w = np.linalg.eigvalsh(hessian(g, f, [0.9, 0.0]))
    out.append(CheckRecord("square_distance.unit_circle.inside", PaperTag.SQUARE_DISTANCE, 0.0, 0.0,
                           {"rho": 0.9, "eigenvalues": w, "convex": bool(w[0] >= 0)}))
    return out


def check_psh_counterexample(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """A PSH function that is not convex: f = 2x^2 - y^2 on C."""
    _need(sc.kahler is not None and sc.kahler.dim == 2, "Kähler structure on C", sc)
    k = sc.kahler
    f = _total(sc, _field(sc, "f"))
    p = np.asarray(sc.base_point, float)
    defect, _ = kahler_psh_defect(k, f, p)
    lap = laplacian(k.metric, f, p)
    one = p_plane_psh_defect(k.metric, f, p, 1)
    return [
        CheckRecord("psh_counterexample.psh", PaperTag.REMARK_5_1, max(0.0, -defect), 1e-12,
                    {"levi": defect}),
        CheckRecord("psh_counterexample.laplacian", PaperTag.REMARK_5_1, abs(lap - 2.0), 1e-12,
                    {"laplacian": lap}),
        CheckRecord("psh_counterexample.not_convex", PaperTag.REMARK_5_1, max(0.0, one + 1e-8), 0.0,
                    {"one_plane_defect": one}),
    ]


def check_kahler_psh(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.kahler is not None, "Kähler structure", sc)
    k = sc.kahler
    n = k.dim
    sources = _field(sc, "levi")
    dgap, bound, coord = 0.0, 0.0, 0.0
    flat = all(float(np.abs(curvature(k.metric, p).riemann).max()) < 1e-12
               for p in _kahler_points(sc, 2, ctx.rng))
    for p in _kahler_points(sc, 5, ctx.rng):
        G = k.metric.matrix(p)
        for src in sources:
            f = _total(sc, src)
            defect, plane = kahler_psh_defect(k, f, p)
            L = levi_matrix(k, f, p)
            dgap = max(dgap, abs(defect - _lambda_min(L, G)))
            # a complex line is a 2-plane, so the 2-plane defect bounds the Levi defect from below
            bound = max(bound, p_plane_psh_defect(k.metric, f, p, 2) - defect)
            if flat:
                _, _, hh = f.eval(p)
                for j in range(0, n, 2):
                    coord = max(coord, abs(L[j, j] - (hh[j, j] + hh[j + 1, j + 1])))
    out = [
        CheckRecord("kahler_psh.defect", PaperTag.KAHLER_PSH, dgap, 1e-8),
        CheckRecord("kahler_psh.subset_bound", PaperTag.KAHLER_PSH, max(0.0, bound), 1e-8),
    ]
    if flat:
        out.append(CheckRecord("kahler_psh.levi_coordinate", PaperTag.LEVI, coord, 1e-10))
    return out


# --- G2 ------------------------------------------------------------------------------


def check_g2_identities(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.g2 is not None, "G2 structure", sc)
    g2 = sc.g2
    wedge = g2.phi.wedge(g2.psi)
    vol = float(next(iter(wedge.coefficients.values()), 0.0))
    extra = sum(abs(c) for key, c in wedge.coefficients.items() if key != tuple(range(7)))
    seed = int(ctx.rng.integers(2 ** 31))
    u, v = random_orthonormal_pairs(1000, seed)
    frames = associative_frames(u, v, g2)
    calib = float(np.abs(g2.phi.evaluate_frame(frames) - 1.0).max())
    rng = ctx.rng
    worst = -math.inf
    for start in range(0, 100_000, 20_000):
        A = rng.standard_normal((20_000, 7, 3))
        Q, _ = np.linalg.qr(A)
        worst = max(worst, float(np.abs(g2.phi.evaluate_frame(Q)).max()))
    return [
        CheckRecord("g2_identities.phi_wedge_psi", PaperTag.G2_FORMS, abs(vol - 7.0) + extra, 1e-12),
        CheckRecord("g2_identities.cross_product_calibrated", PaperTag.G2_FORMS, calib, 1e-9, {"pairs": 1000}),
        CheckRecord("g2_identities.comass", PaperTag.G2_FORMS, max(0.0, worst - 1.0), 1e-9,
                    {"planes": 100_000, "max_phi": worst}),
    ]


_COORD_ASSOC = [tuple(int(ch) for ch in word) for word in PHI_MONOMIALS]


def _quadratic_field(A: np.ndarray) -> ScalarField:
    A = 0.5 * (A + A.T)
    n = A.shape[0]

    def fn(*x):
        return sum(0.5 * A[i, j] * x[i] * x[j] for i in range(n) for j in range(n) if A[i, j] != 0.0)

    return ScalarField(fn, n, "quadratic")


def check_phi_psh(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    _need(sc.g2 is not None, "G2 structure", sc)
    g2 = sc.g2
    f = _total(sc, _field(sc, "phi_psh"))
    p = ctx.rng.uniform(-1, 1, 7) * 0.5
    defect, plane = g2_psh_defect(g2, f, p)
    H = hessian(g2.metric, f, p)
    u, v = random_orthonormal_pairs(100_000, int(ctx.rng.integers(2 ** 31)))
    brute = float(_associative_trace(H, u, v, g2).min())
    angles = {"".join(map(str, t)): plane.angle_to(Plane.coordinate(t, 7)) for t in _COORD_ASSOC}
    nearest = min(angles, key=angles.get)
    out = [CheckRecord("phi_psh.defect", PaperTag.G2_PSH, max(0.0, defect - brute), 1e-8,
                       {"defect": defect, "brute_force": brute, "samples": 100_000,
                        "nearest_coordinate_plane": nearest, "angle": angles[nearest],
                        "witness_frame": plane.frame})]
    worst = math.inf
    for _ in range(5):
        B = ctx.rng.standard_normal((7, 7))
        worst = min(worst, g2_psh_defect(g2, _quadratic_field(B @ B.T), p, samples=256)[0])
    out.append(CheckRecord("phi_psh.convex_quadratics", PaperTag.G2_PSH, max(0.0, -worst), 1e-8,
                           {"min_defect": worst}))
    return out


def _random_cubic(rng) -> str:
    terms = []
    for _ in range(8):
        deg = int(rng.integers(1, 4))
        idx = rng.integers(1, 8, size=deg)
        terms.append(f"{rng.normal():.6f}*" + "*".join(f"x{i}" for i in idx))
    return "+".join(terms).replace("+-", "-")


def check_hphi(sc: Scenario, ctx: CheckContext) -> list[CheckRecord]:
    """Restriction of the 𝓗^φ form to associative planes is the Hessian trace."""
    _need(sc.g2 is not None, "G2 structure", sc)
    g2 = sc.g2
    sources = [_random_cubic(ctx.rng) for _ in range(10)]
    if "hphi" in sc.fields:
        sources.append(sc.fields["hphi"])
    worst = 0.0
    for src in sources:
        f = ScalarField.from_expr(src, 7)
        p = ctx.rng.uniform(-1, 1, 7)
        u, v = random_orthonormal_pairs(100, int(ctx.rng.integers(2 ** 31)))
        form = hphi_form(g2, f, p)
        H = hessian(g2.metric, f, p)
        lhs = form.evaluate_frame(associative_frames(u, v, g2), p)
        rhs = _associative_trace(H, u, v, g2)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return [CheckRecord("hphi", PaperTag.HPHI, worst, 1e-7, {"polynomials": len(sources), "planes": 100})]


# --- registry --------------------------------------------------------------------

CHECKS: dict[str, Callable[[Scenario, CheckContext], list[CheckRecord]]] = {
    "hessian_transfer": check_hessian_transfer,
    "horizontal_geodesic": check_horizontal_geodesic,
    "restricted_laplacian": check_restricted_laplacian,
    "radius_counterexample": check_radius_counterexample,
    "hadamard": check_hadamard,
    "lassalle": check_lassalle,
    "first_variation": check_first_variation,
    "second_variation": check_second_variation,
    "second_variation_kahler": check_second_variation_kahler,
    "second_variation_g2": check_second_variation_g2,
    "toric_volume": check_toric_volume,
    "lagrangian_determinant": check_lagrangian_determinant,
    "ricci_two_form": check_ricci_two_form,
    "square_distance": check_square_distance,
    "psh_counterexample": check_psh_counterexample,
    "kahler_psh": check_kahler_psh,
    "g2_identities": check_g2_identities,
    "phi_psh": check_phi_psh,
    "hphi": check_hphi,
    "P3.1": check_P3_1,
    "P5.1": check_P5_1,
    "P5.2": check_P5_2,
    "C5.1": check_C5_1,
    "P5.4": check_P5_4,
    "C6.1": check_C6_1,
    "P7.1": check_P7_1,
    "P7.2": check_P7_2,
    "P7.3": check_P7_3,
    "P7.4": check_P7_4,
}


def check_ids() -> list[str]:
    return list(CHECKS)


def run_check(name: str, sc: Scenario, seed: int = 0, grid: int | None = None) -> list[CheckRecord]:
    if name not in CHECKS:
        raise UnknownCheckError(f"unknown check {name!r}; known: {', '.join(CHECKS)}")
    ctx = CheckContext(seed=seed, grid=grid, name=name)
    try:
        return CHECKS[name](sc, ctx)
    except CheckNotApplicableError:
        raise
    except GeometryError as exc:
        # a geometric precondition failed inside an operation
        return [CheckRecord(f"{name}.precondition", _tag_for(name), math.inf, 0.0,
                            {"error": type(exc).__name__, "message": str(exc)}, hypothesis=True)]


_TAGS = {
    "hessian_transfer": PaperTag.HESSIAN_TRANSFER, "horizontal_geodesic": PaperTag.HORIZONTAL_GEODESIC,
    "restricted_laplacian": PaperTag.RESTRICTED_LAPLACIAN, "radius_counterexample": PaperTag.RADIUS_EXAMPLE,
    "hadamard": PaperTag.HADAMARD, "lassalle": PaperTag.LASSALLE,
    "first_variation": PaperTag.FIRST_VARIATION, "second_variation": PaperTag.SECOND_VARIATION,
    "second_variation_kahler": PaperTag.SECOND_VARIATION_KAHLER,
    "second_variation_g2": PaperTag.SECOND_VARIATION_G2, "toric_volume": PaperTag.THM_8_1,
    "lagrangian_determinant": PaperTag.LAGRANGIAN_DET, "ricci_two_form": PaperTag.RICCI_FORM,
    "square_distance": PaperTag.SQUARE_DISTANCE, "psh_counterexample": PaperTag.REMARK_5_1,
    "kahler_psh": PaperTag.KAHLER_PSH, "g2_identities": PaperTag.G2_FORMS, "phi_psh": PaperTag.G2_PSH,
    "hphi": PaperTag.HPHI,
}


def _tag_for(name: str) -> PaperTag:
    if name in _TAGS:
        return _TAGS[name]
    return PaperTag(name)
