"""First and second variation of fibre volume along horizontal lifts.

A variation moves the fibre over ``b`` along a base geodesic ``b(t)``;
the family is ``iota_t(y) = fibre_param(b(t), y)`` and its velocity ``Z`` is
the horizontal lift of ``b'(0)``.  Every analytic formula is compared to
symmetric differences of the fibre volume itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from calibra import jets
from calibra.calibration import AlternatingForm, G2Structure, KahlerStructure
from calibra.manifold import (
    GeometryError,
    ScalarField,
    christoffel,
    curvature_batch,
    field_on,
    geodesic,
)
from calibra.submersion import (
    NonCompactFibreError,
    RiemannianSubmersion,
    _pairwise_sum,
    fibre_volume,
)

_CHUNK = 4096


def _einsum(*args):
    return np.einsum(*args, optimize=True)


class NotHorizontalError(GeometryError):
    pass


class FibreNotLagrangianError(GeometryError):
    pass


class FibreNotMinimalError(GeometryError):
    pass


class FibreNotCoassociativeError(GeometryError):
    pass


def default_grid(fibre_dim: int) -> int:
    return {1: 128, 2: 64}.get(fibre_dim, 8)


@dataclass
class FibreVariation:
    """Fibres over the base geodesic through ``b`` with velocity ``direction``."""

    rs: RiemannianSubmersion
    b: np.ndarray
    direction: np.ndarray
    grid: int | None = None

    def __post_init__(self):
        if not self.rs.compact_fibres:
            raise NonCompactFibreError(f"fibres of {self.rs.name} are not compact")
        self.b = np.atleast_1d(np.asarray(self.b, float))
        self.direction = np.atleast_1d(np.asarray(self.direction, float))
        if self.grid is None:
            self.grid = default_grid(self.rs.fibre_dim)

    def base_point(self, t: float, steps: int = 16) -> np.ndarray:
        """``b(t)`` on the base geodesic."""
        if t == 0:
            return self.b.copy()
        pts, _ = geodesic(self.rs.base, self.b, self.direction, t, steps)
        return pts[-1]

    def family(self, t: float):
        """The immersion ``iota_t`` as an immersed submanifold."""
        return self.rs.fibre(self.base_point(t))

    def volume(self, t: float = 0.0, grid: int | None = None) -> float:
        return fibre_volume(self.rs, self.base_point(t), max(grid or self.grid, 32))


@dataclass
class VariationReport:
    formula: str
    first: float
    second_analytic: float
    second_fd: float
    terms: dict = field(default_factory=dict)
    richardson_gap: float = 0.0
    second_fd_coarse: float = 0.0

    @property
    def gap(self) -> float:
        return abs(self.second_analytic - self.second_fd)

    @property
    def tolerance(self) -> float:
        return max(1e-4, 1e-3 * abs(self.second_fd))

    @property
    def consistent(self) -> bool:
        return self.gap < self.tolerance

    def as_dict(self) -> dict:
        return {
            "formula": self.formula,
            "first": self.first,
            "second_analytic": self.second_analytic,
            "second_fd": self.second_fd,
            "richardson_gap": self.richardson_gap,
            "terms": dict(self.terms),
        }


# --- pointwise data on the fibre grid -------------------------------------


def _batched(fn, X: np.ndarray, n: int) -> np.ndarray:
    """Evaluate a nested-list matrix callable at a batch of points."""
    raw = fn(*[X[:, i] for i in range(X.shape[1])])
    N = X.shape[0]
    return np.stack([np.stack([np.broadcast_to(np.asarray(jets.value(raw[i][j]), float), (N,))
                               for j in range(n)], axis=-1) for i in range(n)], axis=-2)


def _form_tensor(form: AlternatingForm, X: np.ndarray) -> np.ndarray:
    """Batched antisymmetric tensor of a (possibly field-valued) 2-form."""
    n = form.dim
    T = np.zeros((X.shape[0], n, n))
    for (i, j), c in form.coefficients.items():
        val = c(X) if isinstance(c, ScalarField) else c
        T[:, i, j] = val
        T[:, j, i] = -val
    return T


def _chunk_data(v: FibreVariation, Y: np.ndarray) -> dict:
    rs = v.rs
    m, k = rs.m, rs.fibre_dim
    X, D, D2 = rs.fibre_jet(v.b, Y, order=2)
    Pb, E = D[..., :m], D[..., m:]
    G, Gam, R = curvature_batch(rs.total, X)
    bdot = v.direction
    bddot = -_einsum("kij,i,j->k", christoffel(rs.base, v.b), bdot, bdot)

    Z = Pb @ bdot
    h = np.swapaxes(E, -1, -2) @ G @ E
    hinv = np.linalg.inv(h)
    GZ = _einsum("...ij,...j->...i", G, Z)
    ortho = _einsum("...ia,...i->...a", E, GZ)
    scale = np.sqrt(_einsum("...i,...i->...", Z, GZ))[:, None] * np.sqrt(_einsum("...aa->...a", h))
    if np.any(np.abs(ortho) > 1e-8 * np.maximum(scale, 1.0)):
        raise NotHorizontalError("variation field has a vertical component")

    # projector onto the normal bundle
    Ptan = E @ hinv @ np.swapaxes(E, -1, -2) @ G
    Pnor = np.eye(rs.n) - Ptan
    conn = _einsum("...iab->...abi", D2[..., m:, m:]) + _einsum("...kij,...ia,...jb->...abk", Gam, E, E)
    II = _einsum("...ij,...abj->...abi", Pnor, conn)
    II = 0.5 * (II + np.swapaxes(II, -2, -3))
    H = _einsum("...ab,...abi->...i", hinv, II)

    # nabla_Z Z along the lifted geodesic family
    W = (_einsum("...iab,a,b->...i", D2[..., :m, :m], bdot, bdot) + Pb @ bddot
         + _einsum("...kij,...i,...j->...k", Gam, Z, Z))
    # nabla_{E_a} Z
    DZ = (_einsum("...iab,b->...ai", D2[..., m:, :m], bdot)
          + _einsum("...kij,...ia,...j->...ak", Gam, E, Z))

    RZZ = _einsum("...ijkl,...ia,...j,...k,...lm,...mb->...ab", R, E, Z, Z, G, E)
    ric = _einsum("...ijki->...jk", R)
    ricZZ = _einsum("...jk,...j,...k->...", ric, Z, Z)
    return dict(X=X, E=E, G=G, Z=Z, h=h, hinv=hinv, sqrt_h=np.sqrt(np.linalg.det(h)),
                II=II, H=H, W=W, DZ=DZ, Pnor=Pnor, RZZ=RZZ, ricZZ=ricZZ, Gam=Gam)


def _grid_data(v: FibreVariation, keys) -> tuple[dict, tuple, float]:
    Y, cell, counts = v.rs.fibre_grid(v.grid)
    parts: dict[str, list] = {key: [] for key in keys}
    for start in range(0, len(Y), _CHUNK):
        data = _chunk_data(v, Y[start:start + _CHUNK])
        for key in keys:
            parts[key].append(data[key])
    out = {key: np.concatenate(vals) for key, vals in parts.items()}
    out["Y"] = Y
    return out, counts, cell


def _gdot(G, a, b) -> np.ndarray:
    return _einsum("...i,...ij,...j->...", a, G, b)


def _periodic_diff(values: np.ndarray, counts: tuple, axis: int, spacing: float) -> np.ndarray:
    """Second-order central difference along a periodic grid axis."""
    tail = values.shape[1:]
    arr = values.reshape(counts + tail)
    d = (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2 * spacing)
    return d.reshape((-1,) + tail)


def _spacings(rs: RiemannianSubmersion, counts: tuple) -> np.ndarray:
    return (rs.fibre_upper - rs.fibre_lower) / np.array(counts, float)


def _divergence(rs, counts, sqrt_h, vec) -> np.ndarray:
    """``(1/sqrt h) d_a (sqrt h v^a)`` on the periodic fibre grid."""
    dy = _spacings(rs, counts)
    total = np.zeros(len(sqrt_h))
    for a in range(rs.fibre_dim):
        total += _periodic_diff(sqrt_h * vec[:, a], counts, a, dy[a])
    return total / sqrt_h


def _integrate(values, sqrt_h, cell) -> float:
    return _pairwise_sum(values * sqrt_h) * cell


# --- finite-difference oracle ------------------------------------------------


def volume_profile_fd(v: FibreVariation, t_step: float = 1e-3, grid: int | None = None):
    """``(first_fd, second_fd)`` from symmetric differences of ``t -> Vol(b(t))``."""
    grid = max(grid or v.grid, 32)
    V0 = v.volume(0.0, grid)
    Vp = v.volume(t_step, grid)
    Vm = v.volume(-t_step, grid)
    return (Vp - Vm) / (2 * t_step), (Vp - 2 * V0 + Vm) / t_step ** 2


def _fd_oracle(v: FibreVariation, t_step: float, grid) -> tuple[float, float]:
    _, fine = volume_profile_fd(v, t_step, grid)
    _, coarse = volume_profile_fd(v, 2 * t_step, grid)
    return fine, coarse


def _report(formula, v, first, terms, t_step, fd_grid) -> VariationReport:
    # t_step=None skips the oracle (analytic value only)
    fine, coarse = (math.nan, math.nan) if t_step is None else _fd_oracle(v, t_step, fd_grid)
    total = math.fsum(terms.values())
    return VariationReport(formula, first, total, fine, terms, abs(fine - coarse), coarse)


# --- formulas -----------------------------------------------------------------

_RIEMANNIAN_KEYS = ["G", "E", "Z", "hinv", "sqrt_h", "II", "H", "W", "DZ", "Pnor", "RZZ"]
_KAHLER_KEYS = ["X", "G", "E", "Z", "hinv", "sqrt_h", "H", "ricZZ"]
_G2_KEYS = ["X", "G", "E", "Z", "hinv", "sqrt_h", "H", "DZ", "ricZZ"]


def _riemannian_density(v: FibreVariation, d: dict, counts) -> dict:
    """Pointwise second derivative of the volume form, per unit ``vol_0``."""
    G, Z, hinv, H, W = d["G"], d["Z"], d["hinv"], d["H"], d["W"]
    IIZ = _einsum("...abi,...ij,...j->...ab", d["II"], G, Z)
    # tangential part of nabla_Z Z in the coordinate frame of the fibre
    wt = _einsum("...ab,...ib,...ij,...j->...a", hinv, d["E"], G, W)
    DZn = _einsum("...ij,...aj->...ai", d["Pnor"], d["DZ"])
    return {
        "second_fundamental": -_einsum("...ab,...bc,...cd,...da->...", hinv, IIZ, hinv, IIZ),
        "curvature": -_einsum("...ab,...ab->...", hinv, d["RZZ"]),
        "tangential_divergence": _divergence(v.rs, counts, d["sqrt_h"], wt),
        "mean_curvature_acceleration": -_gdot(G, H, W),
        "normal_derivative": _einsum("...ab,...ai,...ij,...bj->...", hinv, DZn, G, DZn),
        "mean_curvature_squared": _gdot(G, H, Z) ** 2,
    }


def _integrate_terms(density: dict, sqrt_h, cell) -> dict:
    return {name: _integrate(vals, sqrt_h, cell) for name, vals in density.items()}


def first_variation(v: FibreVariation) -> float:
    """``-int H . Z`` over the fibre (``Z`` is normal by construction)."""
    d, _, cell = _grid_data(v, ["G", "H", "Z", "sqrt_h"])
    return -_integrate(_gdot(d["G"], d["H"], d["Z"]), d["sqrt_h"], cell)


def second_variation_riemannian(v: FibreVariation, t_step: float = 1e-3,
                                fd_grid: int | None = None) -> VariationReport:
    """Six-term second variation of volume integrated over the fibre."""
    d, counts, cell = _grid_data(v, _RIEMANNIAN_KEYS)
    sh = d["sqrt_h"]
    terms = _integrate_terms(_riemannian_density(v, d, counts), sh, cell)
    first = -_integrate(_gdot(d["G"], d["H"], d["Z"]), sh, cell)
    return _report("riemannian", v, first, terms, t_step, fd_grid)


def _hodge_laplacian_1form(rs, counts, hinv, sqrt_h, zeta) -> np.ndarray:
    """``(d delta + delta d) zeta`` for a 1-form on the periodic fibre grid."""
    k = rs.fibre_dim
    dy = _spacings(rs, counts)
    up = _einsum("...ab,...b->...a", hinv, zeta)
    delta = -_divergence(rs, counts, sqrt_h, up)
    out = np.stack([_periodic_diff(delta, counts, a, dy[a]) for a in range(k)], axis=-1)
    if k > 1:
        dz = [_periodic_diff(zeta, counts, a, dy[a]) for a in range(k)]
        F = np.stack([np.stack([dz[a][:, b] - dz[b][:, a] for b in range(k)], -1) for a in range(k)], -2)
        Fup = _einsum("...ac,...bd,...cd->...ab", hinv, hinv, F)
        h = np.linalg.inv(hinv)
        for dd in range(k):
            div = _divergence(rs, counts, sqrt_h, Fup[:, :, dd])
            out -= _einsum("...b,...->...b", h[:, :, dd], div)
    return out


def _scalar_laplacian(rs, counts, hinv, sqrt_h, f) -> np.ndarray:
    dy = _spacings(rs, counts)
    grad = np.stack([_periodic_diff(f, counts, a, dy[a]) for a in range(rs.fibre_dim)], axis=-1)
    return _divergence(rs, counts, sqrt_h, _einsum("...ab,...b->...a", hinv, grad))


def _kahler_density(v: FibreVariation, k: KahlerStructure, d: dict, counts, tol: float) -> dict:
    rs = v.rs
    if 2 * rs.fibre_dim != rs.n:
        raise FibreNotLagrangianError("a Lagrangian fibre has half the ambient dimension")
    X, E, Z, G = d["X"], d["E"], d["Z"], d["G"]
    Jm = _batched(k.J, X, rs.n)
    Om = np.swapaxes(Jm, -1, -2) @ G
    lag = np.swapaxes(E, -1, -2) @ Om @ E
    if np.abs(lag).max() > tol:
        raise FibreNotLagrangianError(f"omega restricted to the fibre is {np.abs(lag).max():.3e}")
    Hn = np.sqrt(np.abs(_gdot(G, d["H"], d["H"])))
    if Hn.max() > 1e-7:
        raise FibreNotMinimalError(f"mean curvature of the fibre is {Hn.max():.3e}")
    hinv, sh = d["hinv"], d["sqrt_h"]
    zeta = _einsum("...i,...ij,...ja->...a", Z, Om, E)
    lap = _hodge_laplacian_1form(rs, counts, hinv, sh, zeta)
    return {
        "hodge": _einsum("...ab,...a,...b->...", hinv, lap, zeta),
        "ricci": -d["ricZZ"],
        "half_laplacian_norm": 0.5 * _scalar_laplacian(rs, counts, hinv, sh, _gdot(G, Z, Z)),
    }


def second_variation_kahler(v: FibreVariation, k: KahlerStructure, t_step: float = 1e-3,
                            fd_grid: int | None = None, tol: float = 1e-8) -> VariationReport:
    """Second variation at a minimal Lagrangian fibre via the Hodge Laplacian of
    ``zeta = omega(Z, .)`` restricted to the fibre."""
    d, counts, cell = _grid_data(v, _KAHLER_KEYS)
    sh = d["sqrt_h"]
    terms = _integrate_terms(_kahler_density(v, k, d, counts, tol), sh, cell)
    first = -_integrate(_gdot(d["G"], d["H"], d["Z"]), sh, cell)
    return _report("kahler", v, first, terms, t_step, fd_grid)


_SHUFFLE = (((0, 1), (2, 3), 1), ((0, 2), (1, 3), -1), ((0, 3), (1, 2), 1),
            ((1, 2), (0, 3), 1), ((1, 3), (0, 2), -1), ((2, 3), (0, 1), 1))


def _wedge22(alpha, beta) -> np.ndarray:
    """``(alpha ^ beta)(1, 2, 3, 4)`` for batched 2-forms on a 4-dimensional space."""
    return sum(s * alpha[:, i, j] * beta[:, p, q] for (i, j), (p, q), s in _SHUFFLE)


def _g2_density(v: FibreVariation, g2: G2Structure, tau2: AlternatingForm, d: dict, counts,
                tol: float) -> dict:
    rs = v.rs
    if rs.n != 7 or rs.fibre_dim != 4:
        raise FibreNotCoassociativeError("coassociative fibres are 4-dimensional in a 7-manifold")
    X, E, Z, G, hinv, sh = d["X"], d["E"], d["Z"], d["G"], d["hinv"], d["sqrt_h"]
    phi = g2.phi_tensor
    phiE = _einsum("ijk,...ia,...jb,...kc->...abc", phi, E, E, E)
    if np.abs(phiE).max() > tol:
        raise FibreNotCoassociativeError(f"phi restricted to the fibre is {np.abs(phiE).max():.3e}")
    # 4-forms on the fibre become densities after dividing by the oriented volume
    orient = np.sign(g2.psi.evaluate_frame(E[:1])[0]) / sh

    # (nabla_{E_a} Z)^T as ambient vectors
    A = _einsum("...ab,...ib,...ij,...cj->...ca", hinv, E, G, d["DZ"])
    At = _einsum("...ia,...ca->...ci", E, A)
    izphi = _einsum("ijk,...i->...jk", phi, Z)
    B = _einsum("...jk,...aj,...kb->...ab", izphi, At, E)
    gamma = B - np.swapaxes(B, -1, -2)
    T = _form_tensor(tau2, X)
    tauE = _einsum("...ij,...ia,...jb->...ab", T, E, E)

    # d(i_Z tau2 ^ i_Z phi) pulled back to the fibre
    mu = _einsum("...ij,...i,...ja->...a", T, Z, E)
    nu = _einsum("...jk,...ja,...kb->...ab", izphi, E, E)
    dy = _spacings(rs, counts)
    exact = 0.0
    for omit in range(4):
        a, b, c = [i for i in range(4) if i != omit]
        beta = mu[:, a] * nu[:, b, c] - mu[:, b] * nu[:, a, c] + mu[:, c] * nu[:, a, b]
        exact = exact + (-1) ** omit * _periodic_diff(beta, counts, omit, dy[omit])
    return {
        "torsion": orient * _wedge22(tauE, gamma),
        "ricci": -d["ricZZ"],
        "stokes": orient * exact,
    }


def second_variation_g2(v: FibreVariation, g2: G2Structure | None = None,
                        tau2: AlternatingForm | None = None, t_step: float = 1e-3,
                        fd_grid: int | None = None, tol: float = 1e-8) -> VariationReport:
    """Second variation at a coassociative fibre of the flat G2 structure."""
    g2 = g2 or G2Structure()
    tau2 = tau2 if tau2 is not None else g2.tau2
    d, counts, cell = _grid_data(v, _G2_KEYS)
    sh = d["sqrt_h"]
    terms = _integrate_terms(_g2_density(v, g2, tau2, d, counts, tol), sh, cell)
    first = -_integrate(_gdot(d["G"], d["H"], d["Z"]), sh, cell)
    return _report("g2", v, first, terms, t_step, fd_grid)


# --- fibre integrals of functions ---------------------------------------------


def integral_second_derivative(v: FibreVariation, f, formula: str = "riemannian",
                               structure=None, tau2: AlternatingForm | None = None) -> dict:
    """Analytic ``d^2/dt^2 int f vol_t`` along the variation.

    ``f'' + 2 f' vol' / vol + f vol'' / vol`` integrated over the fibre, with
    ``vol''`` from the chosen formula.  Returns the pieces and their sum.
    """
    f = field_on(v.rs.total, f)
    keys = sorted(set(_RIEMANNIAN_KEYS + _G2_KEYS + ["Gam"]))
    d, counts, cell = _grid_data(v, keys)
    val, grad, hess = f.eval(d["X"])
    Z, W, G, sh = d["Z"], d["W"], d["G"], d["sqrt_h"]
    cov = hess - _einsum("...kij,...k->...ij", d["Gam"], grad)
    f2 = _einsum("...ij,...i,...j->...", cov, Z, Z) + _einsum("...i,...i->...", grad, W)
    f1 = _einsum("...i,...i->...", grad, Z)
    vol1 = -_gdot(G, d["H"], Z)
    if formula == "riemannian":
        density = _riemannian_density(v, d, counts)
    elif formula == "kahler":
        density = _kahler_density(v, structure, d, counts, 1e-8)
    elif formula == "g2":
        g2 = structure or G2Structure()
        density = _g2_density(v, g2, tau2 if tau2 is not None else g2.tau2, d, counts, 1e-8)
    else:
        raise ValueError(f"unknown formula {formula!r}")
    vol2 = sum(density.values())
    pieces = {
        "hessian": _integrate(f2, sh, cell),
        "cross": _integrate(2 * f1 * vol1, sh, cell),
        "volume": _integrate(val * vol2, sh, cell),
    }
    pieces["total"] = math.fsum(pieces.values())
    return pieces
