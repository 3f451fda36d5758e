"""Calibration forms, calibrated planes and PSH defects.

Covers the Kähler form of a complex structure, the standard G2 three-form
and its dual four-form, and the "defect" of a function: the minimum of the
Hessian trace over a Grassmannian of calibrated planes.  A non-negative
defect at a point certifies the corresponding PSH condition there.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import eigh
from scipy.stats import norm, qmc

from calibra import jets
from calibra.jets import Jet
from calibra.manifold import (
    MetricField,
    ScalarField,
    _safe_inverse,
    as_field,
    gram_schmidt,
    hessian,
)


class DegreeMismatchError(ValueError):
    pass


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
            elif seq[i] == seq[j]:
                return 0
    return sign


class AlternatingForm:
    """A k-form stored by its coefficients on strictly increasing index tuples.

    Coefficients are floats or :class:`ScalarField` objects; indices are
    0-based internally.  ``from_monomials`` accepts the compact 1-based
    notation ``{"123": 1, "257": -1}``.
    """

    def __init__(self, degree: int, dim: int, coefficients: Mapping[tuple, object]):
        self.degree = degree
        self.dim = dim
        self.coefficients: dict[tuple, object] = {}
        for idx, c in coefficients.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != degree or any(i < 0 or i >= dim for i in idx):
                raise ValueError(f"bad index tuple {idx} for a {degree}-form on R^{dim}")
            s = _perm_sign(idx)
            if s == 0:
                continue
            key = tuple(sorted(idx))
            if isinstance(c, ScalarField):
                if key in self.coefficients:
                    raise ValueError("field coefficients must be given once per index set")
                self.coefficients[key] = c if s > 0 else ScalarField(
                    lambda *x, c=c: -c.compose(*x), c.nvars, f"-({c.name})")
            else:
                self.coefficients[key] = self.coefficients.get(key, 0.0) + s * float(c)

    @classmethod
    def from_monomials(cls, monomials: Mapping[str, float], dim: int) -> "AlternatingForm":
        coeffs: dict[tuple, float] = {}
        for word, c in monomials.items():
            idx = tuple(int(ch) - 1 for ch in word)
            s = _perm_sign(idx)
            key = tuple(sorted(idx))
            coeffs[key] = coeffs.get(key, 0.0) + s * c
        degree = len(next(iter(monomials)))
        return cls(degree, dim, coeffs)

    @classmethod
    def volume(cls, dim: int) -> "AlternatingForm":
        return cls(dim, dim, {tuple(range(dim)): 1.0})

    def __repr__(self) -> str:
        terms = []
        for idx, c in sorted(self.coefficients.items()):
            name = "".join(str(i + 1) for i in idx)
            terms.append(f"{c if isinstance(c, ScalarField) else f'{c:+g}'}*{name}")
        return f"AlternatingForm({self.degree}, R^{self.dim}: {' '.join(terms) or '0'})"

    @property
    def is_constant(self) -> bool:
        return not any(isinstance(c, ScalarField) for c in self.coefficients.values())

    def at(self, p=None) -> "AlternatingForm":
        """Freeze field coefficients at ``p``."""
        if self.is_constant:
            return self
        p = np.asarray(p, float)
        return AlternatingForm(self.degree, self.dim, {
            idx: float(c(p)) if isinstance(c, ScalarField) else c
            for idx, c in self.coefficients.items()})

    def tensor(self, p=None) -> np.ndarray:
        """Fully antisymmetric coefficient array of shape ``(n,) * k``."""
        form = self.at(p)
        T = np.zeros((self.dim,) * self.degree)
        for idx, c in form.coefficients.items():
            for perm in itertools.permutations(range(self.degree)):
                T[tuple(idx[i] for i in perm)] = _perm_sign(perm) * c
        return T

    def __call__(self, *vectors, p=None) -> np.ndarray:
        """Evaluate on ``k`` vectors (each of shape ``batch + (n,)``)."""
        if len(vectors) != self.degree:
            raise DegreeMismatchError(f"{self.degree}-form evaluated on {len(vectors)} vectors")
        V = np.stack([np.asarray(v, float) for v in vectors], axis=-1)
        return self.evaluate_frame(V, p)

    def evaluate_frame(self, V: np.ndarray, p=None) -> np.ndarray:
        """``V`` has shape ``batch + (n, k)``."""
        V = np.asarray(V, float)
        if V.shape[-1] != self.degree:
            raise DegreeMismatchError(f"{self.degree}-form evaluated on a {V.shape[-1]}-frame")
        form = self.at(p)
        out = np.zeros(V.shape[:-2])
        if self.degree == 0:
            return out + sum(form.coefficients.values())
        for idx, c in form.coefficients.items():
            out = out + c * np.linalg.det(V[..., list(idx), :])
        return out

    def __add__(self, other: "AlternatingForm") -> "AlternatingForm":
        a, b = self.at(), other.at()
        coeffs = dict(a.coefficients)
        for idx, c in b.coefficients.items():
            coeffs[idx] = coeffs.get(idx, 0.0) + c
        return AlternatingForm(self.degree, self.dim, coeffs)

    def scale(self, s: float) -> "AlternatingForm":
        return AlternatingForm(self.degree, self.dim,
                               {i: s * c for i, c in self.at().coefficients.items()})

    def wedge(self, other: "AlternatingForm") -> "AlternatingForm":
        if not (self.is_constant and other.is_constant):
            raise ValueError("wedge is defined on constant forms; freeze with .at(p) first")
        coeffs: dict[tuple, float] = {}
        for I, a in self.coefficients.items():
            for J, b in other.coefficients.items():
                s = _perm_sign(I + J)
                if s == 0:
                    continue
                key = tuple(sorted(I + J))
                coeffs[key] = coeffs.get(key, 0.0) + s * a * b
        return AlternatingForm(self.degree + other.degree, self.dim, coeffs)

    def interior(self, v) -> "AlternatingForm":
        """``v ⌟ self`` for a constant vector (on a frozen form)."""
        v = np.asarray(v, float)
        coeffs: dict[tuple, float] = {}
        for idx, c in self.at().coefficients.items():
            for pos, i in enumerate(idx):
                rest = idx[:pos] + idx[pos + 1:]
                coeffs[rest] = coeffs.get(rest, 0.0) + (-1) ** pos * v[i] * c
        return AlternatingForm(self.degree - 1, self.dim, coeffs)

    def hodge_star(self) -> "AlternatingForm":
        """Hodge star for the flat Euclidean metric and standard orientation."""
        coeffs = {}
        for idx, c in self.at().coefficients.items():
            comp = tuple(i for i in range(self.dim) if i not in idx)
            coeffs[comp] = _perm_sign(idx + comp) * c
        return AlternatingForm(self.dim - self.degree, self.dim, coeffs)

    def max_abs(self) -> float:
        vals = [abs(c) for c in self.at().coefficients.values()]
        return max(vals, default=0.0)

    def exterior_derivative(self, p) -> "AlternatingForm":
        """``d`` of a field-valued form, frozen at ``p``."""
        p = np.asarray(p, float)
        grads = {}
        for idx, c in self.coefficients.items():
            if isinstance(c, ScalarField):
                grads[idx] = c.jet(p, order=1).g
        return exterior_derivative_from_gradients(grads, self.degree, self.dim)


def exterior_derivative_from_gradients(grads: Mapping[tuple, np.ndarray], degree: int,
                                       dim: int) -> AlternatingForm:
    """``(d a)_{i0..ik} = sum_r (-1)^r d_{i_r} a_{i0..^i_r..ik}``."""
    coeffs: dict[tuple, float] = {}
    for idx, grad in grads.items():
        for m in range(dim):
            if m in idx or grad[m] == 0.0:
                continue
            full = (m,) + idx
            s = _perm_sign(full)
            key = tuple(sorted(full))
            coeffs[key] = coeffs.get(key, 0.0) + s * grad[m]
    return AlternatingForm(degree + 1, dim, coeffs)


# --- planes ----------------------------------------------------------------


@dataclass
class Plane:
    """Oriented orthonormal ``k``-frame (columns of ``frame``) at ``base``."""

    base: np.ndarray
    frame: np.ndarray
    metric: np.ndarray = None

    def __post_init__(self):
        self.base = np.asarray(self.base, float)
        self.frame = np.asarray(self.frame, float)
        if self.frame.ndim == 1:
            self.frame = self.frame[:, None]
        if self.metric is None:
            self.metric = np.eye(self.frame.shape[0])

    @classmethod
    def from_vectors(cls, base, vectors, metric=None) -> "Plane":
        V = np.column_stack([np.asarray(v, float) for v in vectors])
        G = np.eye(V.shape[0]) if metric is None else np.asarray(metric, float)
        return cls(base, gram_schmidt(G, V), G)

    @classmethod
    def coordinate(cls, indices, dim: int, base=None) -> "Plane":
        """``span{e_i}`` for 1-based ``indices``, in the given order."""
        eye = np.eye(dim)
        base = np.zeros(dim) if base is None else base
        return cls(base, np.column_stack([eye[i - 1] for i in indices]))

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    def gram_residual(self) -> float:
        F = self.frame
        return float(np.abs(F.T @ self.metric @ F - np.eye(self.dim)).max())

    def projector(self) -> np.ndarray:
        F = self.frame
        return F @ F.T @ self.metric

    def angle_to(self, other: "Plane") -> float:
        """Largest principal angle (flat metric) between two planes of equal dimension."""
        s = np.linalg.svd(self.frame.T @ other.frame, compute_uv=False)
        return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))


def restrict_form(a: AlternatingForm, pl: Plane) -> float:
    if a.degree != pl.dim:
        raise DegreeMismatchError(f"{a.degree}-form restricted to a {pl.dim}-plane")
    return float(a.evaluate_frame(pl.frame, pl.base))


def is_calibrated(a: AlternatingForm, pl: Plane, tol: float = 1e-9) -> bool:
    return abs(restrict_form(a, pl) - 1.0) <= tol


# --- G2 --------------------------------------------------------------------

PHI_MONOMIALS = {"123": 1, "145": 1, "167": 1, "246": 1, "257": -1, "347": -1, "356": -1}
PSI_MONOMIALS = {"4567": 1, "2345": 1, "2367": 1, "1346": -1, "1357": 1,
                 "1247": -1, "1256": -1}


@dataclass
class G2Structure:
    """The flat G2 structure on R^7 (or T^7): constant phi, psi, identity metric."""

    tau2: AlternatingForm | None = None
    phi: AlternatingForm = field(default_factory=lambda: AlternatingForm.from_monomials(PHI_MONOMIALS, 7))
    psi: AlternatingForm = field(default_factory=lambda: AlternatingForm.from_monomials(PSI_MONOMIALS, 7))
    metric: MetricField = field(default_factory=lambda: MetricField.identity(7))

    def __post_init__(self):
        self._phi_tensor = self.phi.tensor()
        if self.tau2 is None:
            self.tau2 = AlternatingForm(2, 7, {})

    @property
    def phi_tensor(self) -> np.ndarray:
        return self._phi_tensor

    def cross(self, u, v) -> np.ndarray:
        """``w`` with ``<w, x> = phi(u, v, x)`` for all ``x``; batched."""
        return np.einsum("ijk,...i,...j->...k", self._phi_tensor, u, v)


def g2_cross(u, v, g2: G2Structure | None = None) -> np.ndarray:
    return (g2 or G2Structure()).cross(np.asarray(u, float), np.asarray(v, float))


def coassociative_test(pl: Plane, g2: G2Structure | None = None, tol: float = 1e-9) -> bool:
    if pl.dim != 4 or pl.frame.shape[0] != 7:
        raise DegreeMismatchError("coassociative test needs a 4-plane in R^7")
    return coassociative_residual(pl, g2) <= tol


def coassociative_residual(pl: Plane, g2: G2Structure | None = None) -> float:
    g2 = g2 or G2Structure()
    F = pl.frame
    return max(abs(float(g2.phi.evaluate_frame(F[:, list(t)])))
               for t in itertools.combinations(range(4), 3))


def associative_frames(u, v, g2: G2Structure | None = None) -> np.ndarray:
    """Frames ``(u, v, u x v)`` of shape ``batch + (7, 3)`` from orthonormal pairs."""
    g2 = g2 or G2Structure()
    return np.stack([u, v, g2.cross(u, v)], axis=-1)


def _orthonormal_pairs(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gram-Schmidt on rows ``raw[..., :7]``, ``raw[..., 7:]``."""
    a, b = raw[..., :7], raw[..., 7:]
    u = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b - np.sum(u * b, axis=-1, keepdims=True) * u
    v = b / np.linalg.norm(b, axis=-1, keepdims=True)
    return u, v


def random_orthonormal_pairs(count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return _orthonormal_pairs(rng.standard_normal((count, 14)))


def _sobol(d: int, count: int, seed: int) -> np.ndarray:
    # counts are rarely powers of two; balance is not needed here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(d=d, scramble=True, seed=seed).random(count)


def sobol_orthonormal_pairs(count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic low-discrepancy pairs (scrambled Sobol mapped to Gaussians)."""
    pts = np.clip(_sobol(14, count, seed), 1e-12, 1 - 1e-12)
    return _orthonormal_pairs(norm.ppf(pts))


def _coordinate_associative_pairs(g2: G2Structure) -> tuple[np.ndarray, np.ndarray]:
    eye = np.eye(7)
    pairs = [(eye[idx[0]], eye[idx[1]]) for idx in sorted(g2.phi.coefficients)]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def _associative_trace(H: np.ndarray, u, v, g2: G2Structure) -> np.ndarray:
    w = g2.cross(u, v)
    q = lambda x: np.einsum("...i,ij,...j->...", x, H, x)  # noqa: E731
    return q(u) + q(v) + q(w)


def _refine_pair(H, u, v, g2: G2Structure, iters: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Projected gradient descent on the Stiefel manifold of pairs, with step
    halving whenever a step fails to decrease the objective."""
    T = g2.phi_tensor
    val = float(_associative_trace(H, u, v, g2))
    step = 0.5 / max(np.abs(H).max(), 1e-12)
    for _ in range(iters):
        w = g2.cross(u, v)
        Hw = H @ w
        gu = 2 * H @ u + 2 * np.einsum("ijk,j,k->i", T, v, Hw)
        gv = 2 * H @ v + 2 * np.einsum("ijk,i,k->j", T, u, Hw)
        Y = np.column_stack([u, v])
        Gr = np.column_stack([gu, gv])
        S = Y.T @ Gr
        rgrad = Gr - Y @ (0.5 * (S + S.T))
        if np.linalg.norm(rgrad) < 1e-13:
            break
        while step > 1e-14:
            Q, R = np.linalg.qr(Y - step * rgrad)
            Q = Q * np.sign(np.diag(R))
            nu, nv = Q[:, 0], Q[:, 1]
            nval = float(_associative_trace(H, nu, nv, g2))
            if nval < val:
                u, v, val = nu, nv, nval
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return u, v, val


def _pick_witness(values: np.ndarray, tie_tol: float) -> int:
    """Lowest index among candidates within ``tie_tol`` of the minimum."""
    best = values.min()
    return int(np.flatnonzero(values <= best + tie_tol)[0])


def g2_psh_defect(g2: G2Structure, f, p, samples: int = 1024, refine_iters: int = 200,
                  seed: int = 0, refine_top: int = 8, tie_tol: float = 1e-9):
    """Minimum of ``tr_P Hess(f)`` over associative planes ``P``.

    Planes are parametrized as ``span{u, v, u x v}``.  The seven coordinate
    associative planes come first in the candidate list, followed by
    ``samples`` scrambled-Sobol pairs; the best ``refine_top`` candidates are
    refined by projected gradient descent.  Returns ``(defect, witness)``.
    """
    if samples < 256:
        raise ValueError("samples must be at least 256")
    p = np.asarray(p, float)
    H = hessian(g2.metric, f, p)
    H = 0.5 * (H + H.T)
    cu, cv = _coordinate_associative_pairs(g2)
    su, sv = sobol_orthonormal_pairs(samples, seed)
    U = np.concatenate([cu, su])
    V = np.concatenate([cv, sv])
    vals = _associative_trace(H, U, V, g2)
    order = np.argsort(vals, kind="stable")[:refine_top]
    refined = vals.copy()
    pairs = {}
    for i in sorted(order):
        u, v, val = _refine_pair(H, U[i], V[i], g2, refine_iters)
        refined[i] = val
        pairs[i] = (u, v)
    k = _pick_witness(refined, tie_tol * max(1.0, np.abs(H).max()))
    u, v = pairs.get(k, (U[k], V[k]))
    return float(refined[k]), Plane(p, associative_frames(u, v, g2))


def hphi_form(g2: G2Structure, f, p) -> AlternatingForm:
    """``d(grad f ⌟ phi) - nabla_{grad f} phi`` at ``p``.

    The metric is flat and ``phi`` has constant coefficients, so the second
    term vanishes identically and the first is assembled from the Hessian.
    """
    f = as_field(f, 7)
    p = np.asarray(p, float)
    _, grad, hess = f.eval(p)
    Ginv = _safe_inverse(g2.metric.matrix(p))
    # coefficients of grad f ⌟ phi and their partial derivatives
    grads = {}
    dgrad = Ginv @ hess  # d_i (grad f)^m, flat metric
    for a, b in itertools.combinations(range(7), 2):
        g = np.einsum("mi,m->i", dgrad, g2.phi_tensor[:, a, b])
        if np.any(g != 0.0):
            grads[(a, b)] = g
    return exterior_derivative_from_gradients(grads, 2, 7)


# --- Kähler ---------------------------------------------------------------


@dataclass
class KahlerStructure:
    """A metric with a compatible complex structure.

    ``J`` maps the coordinate arguments (floats or jets) to an ``n x n``
    nested list; entries may depend on the point only for the
    two-dimensional case built by :meth:`surface`.
    """

    metric: MetricField
    J: Callable
    name: str = "kahler"

    @classmethod
    def flat(cls, complex_dim: int) -> "KahlerStructure":
        """Flat C^n in coordinates ``(x1, y1, ..., xn, yn)``; ``J d/dx = d/dy``."""
        n = 2 * complex_dim
        Jm = np.zeros((n, n))
        for j in range(complex_dim):
            Jm[2 * j + 1, 2 * j] = 1.0
            Jm[2 * j, 2 * j + 1] = -1.0
        return cls(MetricField.identity(n), lambda *x: Jm.tolist(), f"flat C^{complex_dim}")

    @classmethod
    def surface(cls, metric: MetricField, name: str = "surface") -> "KahlerStructure":
        """Rotation by +90 degrees in the oriented orthonormal frame of a 2-d metric."""
        if metric.dim != 2:
            raise ValueError("surface Kähler structure needs a 2-dimensional metric")

        def J(*x):
            g = metric.entries(*x)
            a, b, c = g[0][0], g[0][1], g[1][1]
            s = jets.sqrt(a * c - b * b)
            return [[-b / s, -c / s], [a / s, b / s]]

        return cls(metric, J, name)

    @property
    def dim(self) -> int:
        return self.metric.dim

    def J_matrix(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        raw = self.J(*p)
        n = self.dim
        return np.array([[float(jets.value(raw[i][j])) for j in range(n)] for i in range(n)])

    def kahler_form(self) -> AlternatingForm:
        """``omega(X, Y) = g(JX, Y)`` with field coefficients."""
        n = self.dim

        def coeff(i, j):
            def fn(*x):
                G = self.metric.entries(*x)
                Jm = self.J(*x)
                return sum(Jm[k][i] * G[k][j] for k in range(n))
            return ScalarField(fn, n, f"omega_{i + 1}{j + 1}")

        return AlternatingForm(2, n, {(i, j): coeff(i, j)
                                      for i, j in itertools.combinations(range(n), 2)})

    def omega_matrix(self, p) -> np.ndarray:
        """``Omega[i, j] = omega(e_i, e_j) = (J^T G)[i, j]``."""
        return self.J_matrix(p).T @ self.metric.matrix(p)


def levi_form(k: KahlerStructure, f, p, X) -> float:
    """``Hess(f)(X, X) + Hess(f)(JX, JX)``."""
    p = np.asarray(p, float)
    H = hessian(k.metric, f, p)
    X = np.asarray(X, float)
    JX = k.J_matrix(p) @ X
    return float(X @ H @ X + JX @ H @ JX)


def levi_matrix(k: KahlerStructure, f, p) -> np.ndarray:
    p = np.asarray(p, float)
    H = hessian(k.metric, f, p)
    Jm = k.J_matrix(p)
    L = H + Jm.T @ H @ Jm
    return 0.5 * (L + L.T)


def _sphere_samples(G: np.ndarray, count: int, seed: int) -> np.ndarray:
    n = G.shape[0]
    pts = np.clip(_sobol(n, count, seed), 1e-12, 1 - 1e-12)
    X = norm.ppf(pts)
    return X / np.sqrt(np.einsum("bi,ij,bj->b", X, G, X))[:, None]


def _refine_sphere(L, G, x, iters: int):
    """Projected gradient descent of ``x^T L x`` on the ``G``-unit sphere."""
    val = float(x @ L @ x)
    step = 0.5 / max(np.abs(L).max(), 1e-12)
    Ginv = np.linalg.inv(G)
    for _ in range(iters):
        grad = 2 * Ginv @ L @ x
        rgrad = grad - (x @ G @ grad) * x
        if np.sqrt(rgrad @ G @ rgrad) < 1e-13:
            break
        while step > 1e-14:
            y = x - step * rgrad
            y = y / np.sqrt(y @ G @ y)
            nval = float(y @ L @ y)
            if nval < val:
                x, val = y, nval
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return x, val


def kahler_psh_defect(k: KahlerStructure, f, p, samples: int = 256, refine_iters: int = 200,
                      seed: int = 0, refine_top: int = 4, tie_tol: float = 1e-9):
    """Minimum of the Levi form over unit vectors (one per complex line).

    The coordinate complex lines ``span{e_x_j, J e_x_j}`` lead the candidate
    list; returns ``(defect, witness)`` with the witness line ``span{X, JX}``.
    """
    if samples < 64:
        raise ValueError("samples must be at least 64")
    p = np.asarray(p, float)
    G = k.metric.matrix(p)
    L = levi_matrix(k, f, p)
    Jm = k.J_matrix(p)
    n = k.dim
    lead = []
    for j in range(0, n, 2):
        e = np.zeros(n)
        e[j] = 1.0
        lead.append(e / np.sqrt(e @ G @ e))
    X = np.concatenate([np.array(lead), _sphere_samples(G, samples, seed)])
    vals = np.einsum("bi,ij,bj->b", X, L, X)
    order = np.argsort(vals, kind="stable")[:refine_top]
    refined = vals.copy()
    best = {}
    for i in sorted(order):
        x, val = _refine_sphere(L, G, X[i], refine_iters)
        refined[i] = val
        best[i] = x
    i = _pick_witness(refined, tie_tol * max(1.0, np.abs(L).max()))
    x = best.get(i, X[i])
    return float(refined[i]), Plane(p, np.column_stack([x, Jm @ x]), G)


def p_plane_psh_defect(g: MetricField, f, p, plane_dim: int) -> float:
    """Sum of the ``plane_dim`` smallest eigenvalues of ``Hess(f)`` (orthonormal frame)."""
    if not 1 <= plane_dim <= g.dim:
        raise ValueError("plane_dim out of range")
    p = np.asarray(p, float)
    H = hessian(g, f, p)
    w = eigh(0.5 * (H + H.T), g.matrix(p), eigvals_only=True)
    return float(np.sum(w[:plane_dim]))
