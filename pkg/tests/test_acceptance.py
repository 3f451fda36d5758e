"""Acceptance criteria, each at its stated tolerance."""

import json
import math

import numpy as np
import pytest

from calibra import models
from calibra.calibration import (
    G2Structure,
    Plane,
    associative_frames,
    g2_psh_defect,
    hphi_form,
    random_orthonormal_pairs,
)
from calibra.checks import _g2_of, run_check
from calibra.config import parse_config
from calibra.manifold import MetricField, ScalarField, curvature, hessian
from calibra.report import run_scenario
from calibra.scenarios import load_scenario
from calibra.variation import (
    FibreVariation,
    second_variation_g2,
    second_variation_kahler,
    second_variation_riemannian,
)

criterion = pytest.mark.criterion


def _records(sid, check, **kw):
    return {r.name: r for r in run_check(check, load_scenario(sid), **kw)}


# --- 1 -------------------------------------------------------------------------------


def _catalog_fields():
    cyl = load_scenario("cylinder").fields
    out = [(s, 2) for s in cyl["hadamard"]]
    out += [(cyl["invariant_psh"], 2), (cyl["integral"], 2), (cyl["psh"], 2)]
    out.append((load_scenario("flat_cn").fields["levi"][3], 4))
    out.append((load_scenario("flat_c2_torus").fields["convex"], 4))
    out.append((load_scenario("t7_coassoc").fields["hphi"], 7))
    return out


CATALOG_FIELDS = _catalog_fields()


@criterion(1, "jets agree with central differences on catalog fields")
@pytest.mark.parametrize("src,n", CATALOG_FIELDS, ids=[s for s, _ in CATALOG_FIELDS])
def test_c1_jets_vs_central_differences(src, n):
    assert len(CATALOG_FIELDS) == 10
    f = ScalarField.from_expr(src, n)
    rng = np.random.default_rng(1)
    # annulus 0.5 < |(x1, x2)| < 2 keeps log|z| smooth
    rad = rng.uniform(0.5, 2.0, 100)
    ang = rng.uniform(0, 2 * np.pi, 100)
    P = rng.uniform(-1.5, 1.5, (100, n))
    P[:, 0], P[:, 1] = rad * np.cos(ang), rad * np.sin(ang)
    h1, h2 = 1e-6, 1e-4
    E = np.eye(n)
    worst = 0.0
    for p in P:
        _, g, H = f.eval(p)
        g_fd = np.array([(f(p + h1 * e) - f(p - h1 * e)) / (2 * h1) for e in E])
        H_fd = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                a, b = h2 * E[i], h2 * E[j]
                H_fd[i, j] = (f(p + a + b) - f(p + a - b) - f(p - a + b) + f(p - a - b)) / (4 * h2 * h2)
        err_g = np.abs(g - g_fd).max() / max(1.0, np.abs(g).max())
        err_h = np.abs(H - H_fd).max() / max(1.0, np.abs(H).max())
        worst = max(worst, err_g, err_h)
    assert worst < 1e-5


# --- 2 -------------------------------------------------------------------------------


FLAT = [
    ("euclidean R^3", MetricField.identity(3), [0.3, -0.2, 1.0]),
    ("polar chart", models.polar().total, [1.3, 0.4]),
    ("flat cylinder", models.cylinder().total, [0.7, 2.0]),
    ("flat T^7", models.t7_coassoc().total, [0.1] * 7),
]


@criterion(2, "curvature oracles")
@pytest.mark.parametrize("method", ["jet", "fd"])
@pytest.mark.parametrize("label,g,p", FLAT, ids=[f[0] for f in FLAT])
def test_c2_flat_metrics(label, g, p, method):
    c = curvature(g, p, method)
    assert np.abs(c.riemann).max() < 1e-10
    assert np.abs(c.ricci).max() < 1e-10 and abs(c.scalar) < 1e-10


@criterion(2, "curvature oracles")
@pytest.mark.parametrize("method", ["jet", "fd"])
def test_c2_constant_curvature(method):
    sphere = models.s2_latitude().total
    hyper = MetricField.diagonal([lambda x, y: 1 / (y * y), lambda x, y: 1 / (y * y)], lower=[-np.inf, 0.0])
    for p in ([0.4, 1.0], [1.2, 2.0], [2.7, -1.0]):
        assert curvature(sphere, p, method).scalar == pytest.approx(2.0, abs=1e-6)
    for p in ([0.0, 1.0], [1.5, 0.3], [-2.0, 3.0]):
        assert curvature(hyper, p, method).scalar == pytest.approx(-2.0, abs=1e-6)


# --- 3 -------------------------------------------------------------------------------


@criterion(3, "Hessian transfer on polar and s2_latitude")
@pytest.mark.parametrize("sid", ["polar", "s2_latitude"])
def test_c3_hessian_transfer(sid):
    rec = _records(sid, "hessian_transfer")["hessian_transfer"]
    assert rec.witness["base_points"] == 20 and rec.witness["fibre_samples"] == 32
    assert rec.residual < 1e-6 and rec.passed


# --- 4 -------------------------------------------------------------------------------


@criterion(4, "Hadamard suite on the cylinder")
def test_c4_hadamard():
    recs = _records("cylinder", "hadamard")
    fields = load_scenario("cylinder").fields["hadamard"]
    assert fields == ["x", "x^2-y^2", "log(sqrt(x^2+y^2))", "x^2+y^2"]
    for i in range(4):
        for kind in ("sup", "integral"):
            rec = recs[f"hadamard.{i}.{kind}"]
            # 64 grid points: sum over spans 1..31 of (64 - 2 span) midpoint triples
            assert rec.witness["checked"] == 992
            assert rec.tolerance == 1e-8 and rec.passed


# --- 5 -------------------------------------------------------------------------------


@criterion(5, "G2 form identities")
def test_c5_phi_wedge_psi():
    g2 = G2Structure()
    assert g2.phi.wedge(g2.psi).coefficients == {tuple(range(7)): 7.0}


@criterion(5, "G2 form identities")
def test_c5_cross_product_planes_calibrated():
    g2 = G2Structure()
    u, v = random_orthonormal_pairs(1000, seed=5)
    F = associative_frames(u, v, g2)
    assert np.abs(np.einsum("bia,bic->bac", F, F) - np.eye(3)).max() < 1e-9
    assert np.abs(g2.phi.evaluate_frame(F) - 1).max() < 1e-9


@criterion(5, "G2 form identities")
def test_c5_comass_sampling():
    g2 = G2Structure()
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((100_000, 7, 3)))
    assert np.abs(g2.phi.evaluate_frame(Q)).max() <= 1 + 1e-9


# --- 6 -------------------------------------------------------------------------------


@criterion(6, "phi-PSH defect")
def test_c6_defect_against_brute_force():
    g2 = G2Structure()
    f = ScalarField.from_expr("x1^2-x4^2", 7)
    p = np.zeros(7)
    defect, plane = g2_psh_defect(g2, f, p)
    H = hessian(g2.metric, f, p)
    u, v = random_orthonormal_pairs(100_000, seed=6)
    F = associative_frames(u, v, g2)
    brute = np.einsum("bia,ij,bja->b", F, H, F).min()
    assert defect == pytest.approx(-2.0, abs=0.05)
    assert abs(defect - brute) < 0.05
    assert plane.angle_to(Plane.coordinate([2, 4, 6], 7)) < 0.05


@criterion(6, "phi-PSH defect")
def test_c6_convex_quadratics():
    g2 = G2Structure()
    rng = np.random.default_rng(6)
    names = [f"x{i + 1}" for i in range(7)]
    for _ in range(5):
        A = rng.standard_normal((7, 7))
        A = A @ A.T
        src = "+".join(f"{A[i, j]:.12g}*{names[i]}*{names[j]}" for i in range(7) for j in range(7))
        defect, _ = g2_psh_defect(g2, ScalarField.from_expr(src, 7), rng.standard_normal(7))
        assert defect >= -1e-8


# --- 7 -------------------------------------------------------------------------------


def _random_cubic(rng) -> str:
    terms = []
    for _ in range(8):
        idx = rng.integers(1, 8, size=rng.integers(1, 4))
        terms.append(f"{rng.normal():.10g}*" + "*".join(f"x{i}" for i in idx))
    return "+".join(terms).replace("+-", "-")


@criterion(7, "H^phi consistency")
def test_c7_hphi_restriction():
    g2 = G2Structure()
    rng = np.random.default_rng(7)
    for k in range(10):
        f = ScalarField.from_expr(_random_cubic(rng), 7)
        p = rng.uniform(-1, 1, 7)
        form = hphi_form(g2, f, p)
        H = hessian(g2.metric, f, p)
        u, v = random_orthonormal_pairs(100, seed=100 + k)
        F = associative_frames(u, v, g2)
        trace = np.einsum("bia,ij,bja->b", F, H, F)
        assert np.abs(form.evaluate_frame(F, p) - trace).max() < 1e-7


# --- 8 -------------------------------------------------------------------------------


@criterion(8, "second variation formulas")
def test_c8_sphere_equator():
    rs = models.s2_latitude()
    v = FibreVariation(rs, [math.pi / 2], [1.0])
    riem = second_variation_riemannian(v)
    kahl = second_variation_kahler(v, models.kahler_for(rs))
    assert riem.second_analytic == pytest.approx(-2 * math.pi, abs=1e-3)
    assert kahl.second_analytic == pytest.approx(-2 * math.pi, abs=1e-3)
    for rep in (riem, kahl):
        assert abs(rep.second_analytic - rep.second_fd) / abs(rep.second_fd) < 1e-4


@criterion(8, "second variation formulas")
@pytest.mark.parametrize("r", [0.7, 1.0, 2.0])
def test_c8_polar_cancellation(r):
    rep = second_variation_riemannian(FibreVariation(models.polar(), [r], [1.0]))
    assert abs(rep.second_analytic) < 1e-6
    # pointwise densities -1/r^2 and +1/r^2 over a circle of length 2 pi r
    assert rep.terms["second_fundamental"] == pytest.approx(-2 * math.pi / r, rel=1e-9)
    assert rep.terms["mean_curvature_squared"] == pytest.approx(2 * math.pi / r, rel=1e-9)


@criterion(8, "second variation formulas")
def test_c8_t7_coassociative():
    sc = load_scenario("t7_coassoc")
    v = FibreVariation(sc.rs, sc.base_point, [1.0, 0.0, 0.0])
    rep = second_variation_g2(v, _g2_of(sc), t_step=None)
    assert abs(rep.second_analytic) < 1e-8
    assert abs(rep.terms["stokes"]) < 1e-8


# --- 9 -------------------------------------------------------------------------------


@criterion(9, "toric volume suite")
def test_c9_sphere_identities():
    recs = _records("s2_latitude", "toric_volume", grid=512)
    assert recs["toric_volume.ricci"].residual < 1e-5
    assert recs["toric_volume.scalar"].residual < 1e-5
    orbit = recs["toric_volume.ricci"].witness["minimal_orbits"][0]
    assert orbit["b"] == pytest.approx(math.pi / 2, abs=1e-9)


@criterion(9, "toric volume suite")
def test_c9_flat_torus():
    rec = _records("flat_t2", "toric_volume")["toric_volume.ricci_flat"]
    assert rec.residual < 1e-10 and rec.passed


@criterion(9, "toric volume suite")
def test_c9_catenoid_classification():
    recs = _records("rev_surface", "toric_volume")
    assert load_scenario("rev_surface").params["profile"] == "cosh(z)"
    orbit = recs["toric_volume.ricci"].witness["minimal_orbits"][0]
    assert orbit["type"] == "strict_local_min"
    assert recs["toric_volume.classification"].witness["margin"] > 0.1
    assert recs["toric_volume.classification"].passed


# --- 10 ------------------------------------------------------------------------------


@criterion(10, "proposition drivers")
def test_c10_cylinder_critical_point():
    sc = load_scenario("cylinder")
    assert sc.fields["invariant_psh"] == "log(sqrt(x^2+y^2))^2"
    recs = {r.name: r for r in run_scenario(sc, ["P5.2", "C5.1"]).records}
    assert all(r.passed for r in recs.values())
    crit = recs["C5.1"].witness
    assert crit["count"] == 1
    (cp,) = crit["critical_points"]
    assert cp["b"] == pytest.approx(0.0, abs=1e-8) and cp["local_min"]
    # F = t^2 has second derivative 2
    assert cp["hessian"] == pytest.approx(2.0, rel=1e-6)


@criterion(10, "proposition drivers")
def test_c10_coassociative_equivalence():
    rec = _records("t7_coassoc", "P5.4")["P5.4.equivalence"]
    assert rec.witness["points"] == 20 and rec.passed


@criterion(10, "proposition drivers")
@pytest.mark.parametrize("sid,check", [("cylinder", "P7.1"), ("flat_t2", "P7.1"),
                                       ("cylinder", "P7.4"), ("flat_c2_torus", "P7.4")])
def test_c10_pushdown_convexity(sid, check):
    recs = run_check(check, load_scenario(sid))
    for r in recs:
        if not r.hypothesis and r.name.endswith(("convex", "subharmonic", "haar", "sup")):
            assert r.tolerance == 1e-6
        assert r.passed, r.name


# --- 11 ------------------------------------------------------------------------------


@criterion(11, "counterexample fidelity")
def test_c11_hyperbola():
    recs = _records("hyperbola_psh", "psh_counterexample")
    assert recs["psh_counterexample.psh"].residual == 0 and recs["psh_counterexample.psh"].passed
    assert recs["psh_counterexample.laplacian"].witness["laplacian"] == pytest.approx(2.0)
    assert recs["psh_counterexample.not_convex"].witness["one_plane_defect"] == pytest.approx(-2.0)


@criterion(11, "counterexample fidelity")
def test_c11_polar_radius():
    (rec,) = run_check("radius_counterexample", load_scenario("polar"))
    assert rec.passed
    for r, vertical, base in rec.witness["r_vertical_base"]:
        assert vertical == pytest.approx(1 / r, rel=1e-10) and vertical > 0
        assert base == 0.0


# --- 12 ------------------------------------------------------------------------------


@criterion(12, "deterministic reports")
@pytest.mark.parametrize("sid", ["polar", "flat_cn", "cylinder"])
def test_c12_byte_identical(sid):
    doc = {"scenario": sid, "seed": 12}

    def report():
        cfg = parse_config(json.loads(json.dumps(doc)))
        return run_scenario(cfg.scenario, cfg.checks, cfg.seed, cfg.grid).to_json(wall_clock=False)

    assert report() == report()
