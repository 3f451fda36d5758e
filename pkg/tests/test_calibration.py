import itertools
import math

import numpy as np
import pytest

from calibra.calibration import (
    AlternatingForm,
    DegreeMismatchError,
    G2Structure,
    KahlerStructure,
    Plane,
    associative_frames,
    coassociative_residual,
    g2_cross,
    g2_psh_defect,
    hphi_form,
    is_calibrated,
    kahler_psh_defect,
    levi_form,
    levi_matrix,
    p_plane_psh_defect,
    random_orthonormal_pairs,
    restrict_form,
)
from calibra.manifold import MetricField, ScalarField, hessian


def test_elementary_wedge_and_evaluation():
    dx1 = AlternatingForm(1, 3, {(0,): 1.0})
    dx2 = AlternatingForm(1, 3, {(1,): 1.0})
    w = dx1.wedge(dx2)
    e = np.eye(3)
    assert w(e[0], e[1]) == pytest.approx(1.0)
    assert w(e[1], e[0]) == pytest.approx(-1.0)
    assert dx2.wedge(dx1).coefficients == {(0, 1): -1.0}


def test_degree_mismatch():
    with pytest.raises(DegreeMismatchError):
        restrict_form(AlternatingForm(2, 3, {(0, 1): 1.0}), Plane.coordinate([1], 3))


def test_phi_wedge_psi_is_seven_volumes():
    g2 = G2Structure()
    vol = g2.phi.wedge(g2.psi)
    assert vol.coefficients == {tuple(range(7)): pytest.approx(7.0)}


def test_psi_is_hodge_dual_of_phi():
    g2 = G2Structure()
    star = g2.phi.hodge_star()
    assert {k: v for k, v in star.coefficients.items() if v} == g2.psi.coefficients


def test_cross_product_table_and_norm_identity():
    e = np.eye(7)
    assert np.allclose(g2_cross(e[0], e[1]), e[2])
    assert np.allclose(g2_cross(e[3], e[4]), e[0])
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((2, 7))
    w = g2_cross(u, v)
    assert w @ w == pytest.approx((u @ u) * (v @ v) - (u @ v) ** 2)
    assert abs(w @ u) < 1e-12 and abs(w @ v) < 1e-12


def test_associative_planes_are_calibrated_and_comass_one():
    g2 = G2Structure()
    u, v = random_orthonormal_pairs(200, seed=4)
    vals = g2.phi.evaluate_frame(associative_frames(u, v, g2))
    assert np.abs(vals - 1).max() < 1e-12
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5000, 7, 3)))
    assert np.abs(g2.phi.evaluate_frame(Q)).max() <= 1 + 1e-12
    assert is_calibrated(g2.phi, Plane.coordinate([1, 2, 3], 7))


def test_coassociative_planes():
    g2 = G2Structure()
    pl = Plane.coordinate([4, 5, 6, 7], 7)
    assert coassociative_residual(pl, g2) < 1e-15
    assert restrict_form(g2.psi, pl) == pytest.approx(1.0)
    assert coassociative_residual(Plane.coordinate([1, 2, 3, 4], 7), g2) == pytest.approx(1.0)


def test_exterior_derivative():
    # d(x1 dx2) = dx1 ^ dx2, and d(d f) = 0
    a = AlternatingForm(1, 3, {(1,): ScalarField.from_expr("x1", 3)})
    assert a.exterior_derivative([0.3, 0.1, 0.2]).coefficients == {(0, 1): 1.0}
    f = ScalarField.from_expr("x1*x2^2+sin(x3)", 3)
    from calibra.calibration import exterior_derivative_from_gradients
    p = np.array([0.3, 0.5, 0.7])
    _, _, H = f.eval(p)
    ddf = exterior_derivative_from_gradients({(i,): H[i] for i in range(3)}, 1, 3)
    assert all(abs(c) < 1e-14 for c in ddf.coefficients.values())


def _complex_hessian(H, n):
    """d^2 f / dz_j dzbar_k from the real Hessian in (x1, y1, ..., xn, yn)."""
    M = np.zeros((n, n), complex)
    for j, k in itertools.product(range(n), repeat=2):
        xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
        M[j, k] = 0.25 * (H[xj, xk] + H[yj, yk] + 1j * (H[xj, yk] - H[yj, xk]))
    return M


@pytest.mark.parametrize("src", ["x1^2+x2^2+x3^2+x4^2", "x1^2-x2^2", "2*x1^2-x2^2+x3*x4",
                                 "exp(x1)*cos(x3)+x2*x4", "x1*x3-x2*x4+x1^2*x4"])
def test_levi_defect_matches_complex_hessian(src):
    k = KahlerStructure.flat(2)
    f = ScalarField.from_expr(src, 4)
    p = np.array([0.3, -0.2, 0.5, 0.1])
    H = hessian(k.metric, f, p)
    oracle = 4 * np.linalg.eigvalsh(_complex_hessian(H, 2))[0]
    defect, plane = kahler_psh_defect(k, f, p)
    assert defect == pytest.approx(oracle, abs=1e-9)
    x = plane.frame[:, 0]
    assert levi_form(k, f, p, x) == pytest.approx(defect, abs=1e-9)


def test_levi_on_flat_c():
    k = KahlerStructure.flat(1)
    f = ScalarField.from_expr("2*x^2-y^2", 2)
    assert np.allclose(levi_matrix(k, f, [0.1, 0.2]), 2 * np.eye(2))
    assert p_plane_psh_defect(k.metric, f, [0.1, 0.2], 1) == pytest.approx(-2.0)
    assert p_plane_psh_defect(k.metric, f, [0.1, 0.2], 2) == pytest.approx(2.0)


def test_surface_complex_structure_is_compatible():
    g = MetricField.diagonal([1.0, lambda th, ph: __import__("calibra").jets.sin(th) ** 2])
    k = KahlerStructure.surface(g)
    p = [1.0, 0.0]
    J, G = k.J_matrix(p), g.matrix(p)
    assert np.allclose(J @ J, -np.eye(2))
    assert np.allclose(J.T @ G @ J, G)


def test_p_plane_defect_brute_force():
    g = MetricField.identity(5)
    f = ScalarField.from_expr("x1^2-3*x2^2+x3*x4+0.5*x5^2", 5)
    p = np.zeros(5)
    d2 = p_plane_psh_defect(g, f, p, 2)
    H = hessian(g, f, p)
    rng = np.random.default_rng(0)
    brute = min(np.trace(Q.T @ H @ Q) for Q in (np.linalg.qr(rng.standard_normal((5, 2)))[0]
                                               for _ in range(3000)))
    # Ky Fan: the minimum is the sum of the two smallest eigenvalues
    assert d2 == pytest.approx(np.linalg.eigvalsh(H)[:2].sum(), abs=1e-9)
    assert d2 <= brute + 1e-12


def test_phi_psh_defect_and_witness():
    g2 = G2Structure()
    f = ScalarField.from_expr("x1^2-x4^2", 7)
    defect, plane = g2_psh_defect(g2, f, np.zeros(7))
    assert defect == pytest.approx(-2.0, abs=1e-9)
    assert plane.angle_to(Plane.coordinate([2, 4, 6], 7)) < 1e-9
    assert restrict_form(g2.phi, plane) == pytest.approx(1.0)


def test_phi_psh_defect_of_convex_quadratic():
    g2 = G2Structure()
    f = ScalarField.from_expr("x1^2+2*x2^2+x3^2+x4^2+x5^2+x6^2+3*x7^2+x1*x2", 7)
    defect, _ = g2_psh_defect(g2, f, np.zeros(7))
    assert defect >= 0


def test_hphi_restricts_to_associative_trace():
    g2 = G2Structure()
    f = ScalarField.from_expr("x1^3-2*x2*x5^2+x3*x6*x7+x4^2*x1", 7)
    p = np.array([0.2, -0.1, 0.4, 0.3, -0.5, 0.6, 0.1])
    form = hphi_form(g2, f, p)
    H = hessian(g2.metric, f, p)
    u, v = random_orthonormal_pairs(50, seed=2)
    for a, b in zip(u, v):
        F = associative_frames(a, b, g2)
        assert form.evaluate_frame(F, p) == pytest.approx(np.trace(F.T @ H @ F), abs=1e-10)


def test_kahler_form_on_flat_space():
    k = KahlerStructure.flat(2)
    Om = k.omega_matrix(np.zeros(4))
    # omega(d/dx1, d/dy1) = g(J d/dx1, d/dy1) = 1
    assert Om[0, 1] == pytest.approx(1.0) and Om[1, 0] == pytest.approx(-1.0)
    assert k.kahler_form()(np.eye(4)[0], np.eye(4)[1], p=np.zeros(4)) == pytest.approx(1.0)
    assert math.isclose(abs(Om).sum(), 4.0)
