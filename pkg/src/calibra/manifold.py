"""Chart-based Riemannian geometry.

Everything lives on a single coordinate chart with a box-shaped domain.
Metric coefficients and scalar fields are evaluated with second-order jets
(:mod:`calibra.jets`), which is enough for Christoffel symbols, covariant
Hessians and the full Riemann tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from calibra import jets
from calibra.expr import Expression, parse_expression
from calibra.jets import Jet


class GeometryError(ValueError):
    pass


class DegenerateMetricError(GeometryError):
    pass


class ChartDomainError(GeometryError):
    pass


class RankDeficiencyError(GeometryError):
    pass


class GeodesicLeftChartError(GeometryError):
    def __init__(self, message, points, velocities):
        super().__init__(message)
        self.points = points
        self.velocities = velocities


# --- scalar fields -------------------------------------------------------


class ScalarField:
    """A function on a chart that can be evaluated on values or jets.

    ``fn`` receives ``nvars`` positional arguments (floats, arrays or
    :class:`Jet`) and returns a value of the same kind or a plain constant.
    """

    def __init__(self, fn: Callable, nvars: int, name: str | None = None):
        self.fn = fn
        self.nvars = nvars
        self.name = name or getattr(fn, "__name__", "f")

    def __repr__(self) -> str:
        return f"ScalarField({self.name!r}, nvars={self.nvars})"

    @classmethod
    def from_expr(cls, source: str | Expression, nvars: int,
                  variables: Sequence[str] | None = None) -> "ScalarField":
        ex = source if isinstance(source, Expression) else parse_expression(source, variables)
        if ex.nvars > nvars:
            raise GeometryError(f"expression {ex.pretty()!r} uses more than {nvars} variables")
        name = ex.pretty()
        return cls(ex, nvars, name)

    @classmethod
    def constant(cls, c: float, nvars: int) -> "ScalarField":
        return cls(lambda *args: c, nvars, repr(c))

    def compose(self, *args):
        out = self.fn(*args)
        if not isinstance(out, Jet):
            for a in args:
                if isinstance(a, Jet):
                    return jets.lift(out, a)
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.fn(*[x[..., i] for i in range(self.nvars)])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def jet(self, x, order: int = 2) -> Jet:
        x = np.asarray(x, dtype=float)
        return self.compose(*jets.seed(x[..., :self.nvars], order))

    def eval(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, gradient and coordinate Hessian at ``x``."""
        j = self.jet(x)
        return j.v, j.g, j.h


def as_field(f, nvars: int, variables: Sequence[str] | None = None) -> ScalarField:
    if isinstance(f, ScalarField):
        return f
    if isinstance(f, (str, Expression)):
        return ScalarField.from_expr(f, nvars, variables)
    if callable(f):
        return ScalarField(f, nvars)
    return ScalarField.constant(float(f), nvars)


# --- metrics -------------------------------------------------------------


@dataclass
class MetricField:
    """Symmetric positive-definite coefficient matrix on a box-shaped chart.

    ``entries`` maps the coordinate arguments to an ``n x n`` nested list.
    """

    entries: Callable
    dim: int
    lower: np.ndarray = None
    upper: np.ndarray = None
    name: str = "metric"
    coords: tuple | None = None

    def __post_init__(self):
        n = self.dim
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)

    @classmethod
    def identity(cls, n: int, **kw) -> "MetricField":
        eye = np.eye(n)
        return cls(lambda *x: eye.tolist(), n, **kw)

    @classmethod
    def diagonal(cls, diag: Sequence, n: int | None = None,
                 variables: Sequence[str] | None = None, **kw) -> "MetricField":
        n = len(diag) if n is None else n
        fields = [as_field(d, n, variables) for d in diag]

        def entries(*x):
            return [[fields[i].compose(*x) if i == j else 0.0 for j in range(n)] for i in range(n)]

        return cls(entries, n, **kw)

    @classmethod
    def from_fields(cls, matrix, variables: Sequence[str] | None = None, **kw) -> "MetricField":
        n = len(matrix)
        fields = [[as_field(matrix[i][j], n, variables) for j in range(n)] for i in range(n)]

        def entries(*x):
            return [[fields[min(i, j)][max(i, j)].compose(*x) for j in range(n)] for i in range(n)]

        return cls(entries, n, **kw)

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, float)
        return bool(np.all(p - margin > self.lower) and np.all(p + margin < self.upper))

    def check_point(self, p, margin: float = 0.0) -> np.ndarray:
        p = np.asarray(p, float)
        if p.shape[-1] != self.dim:
            raise ChartDomainError(f"point has {p.shape[-1]} coordinates, chart has {self.dim}")
        if not (np.all(p - margin > self.lower) and np.all(p + margin < self.upper)):
            raise ChartDomainError(f"point {p} outside chart domain (margin {margin})")
        return p

    def matrix(self, p) -> np.ndarray:
        """Metric values only, shape ``batch + (n, n)``."""
        p = np.asarray(p, float)
        raw = self.entries(*[p[..., i] for i in range(self.dim)])
        batch = p.shape[:-1]
        out = np.empty(batch + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                out[..., i, j] = jets.value(raw[i][j])
        return out

    def jet(self, p, order: int = 2):
        """Return ``(G, dG, d2G)``; ``dG[..., i, j, k] = d_k g_ij``."""
        p = np.asarray(p, float)
        n = self.dim
        seeds = jets.seed(p, order)
        raw = self.entries(*seeds)
        batch = p.shape[:-1]
        G = np.empty(batch + (n, n))
        dG = np.zeros(batch + (n, n, n))
        d2G = np.zeros(batch + (n, n, n, n)) if order == 2 else None
        for i in range(n):
            for j in range(n):
                e = raw[i][j]
                if isinstance(e, Jet):
                    G[..., i, j] = e.v
                    dG[..., i, j, :] = e.g
                    if order == 2:
                        d2G[..., i, j, :, :] = e.h
                else:
                    G[..., i, j] = e
        return G, dG, d2G

    def inverse(self, p) -> np.ndarray:
        return _safe_inverse(self.matrix(p))

    def norm(self, p, v) -> float:
        G = self.matrix(p)
        return float(np.sqrt(v @ G @ v))


def _safe_inverse(G: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(G)
    if np.any(w[..., 0] <= 1e-14 * np.maximum(1.0, np.abs(w[..., -1]))):
        raise DegenerateMetricError("metric is singular or not positive definite")
    return np.linalg.inv(G)


# --- connection and curvature -------------------------------------------


def _christoffel_first(dG: np.ndarray) -> np.ndarray:
    """Gamma_{l i j} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)."""
    return 0.5 * (np.einsum("...lji->...lij", dG) + np.einsum("...lij->...lij", dG)
                  - np.einsum("...ijl->...lij", dG))


def christoffel_from_jet(G, dG) -> np.ndarray:
    Ginv = _safe_inverse(G)
    return np.einsum("...kl,...lij->...kij", Ginv, _christoffel_first(dG))


def christoffel(g: MetricField, p) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` (upper index first)."""
    p = g.check_point(p)
    G, dG, _ = g.jet(p, order=1)
    return christoffel_from_jet(G, dG)


def hessian_from_jets(Gam: np.ndarray, grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    return hess - np.einsum("...kij,...k->...ij", Gam, grad)


def field_on(g: MetricField, f) -> ScalarField:
    """Coerce ``f`` to a scalar field on the chart of ``g`` (strings use its coordinate names)."""
    return as_field(f, g.dim, g.coords)


def hessian(g: MetricField, f, p) -> np.ndarray:
    """Covariant Hessian ``Hess(f)_ij = d_i d_j f - Gamma^k_ij d_k f``."""
    f = field_on(g, f)
    p = g.check_point(p)
    _, grad, hess = f.eval(p)
    return hessian_from_jets(christoffel(g, p), grad, hess)


def laplacian(g: MetricField, f, p) -> float:
    p = g.check_point(p)
    return float(np.einsum("ij,ij->", g.inverse(p), hessian(g, f, p)))


def gradient(g: MetricField, f, p) -> np.ndarray:
    """Metric gradient vector of ``f`` at ``p``."""
    f = field_on(g, f)
    _, grad, _ = f.eval(g.check_point(p))
    return g.inverse(p) @ grad


@dataclass
class CurvaturePack:
    christoffel: np.ndarray
    riemann: np.ndarray  # riemann[i, j, k, l]: l-th component of R(e_i, e_j) e_k
    ricci: np.ndarray
    scalar: float
    metric: np.ndarray

    def sectional(self, X, Y) -> float:
        R = np.einsum("ijkl,i,j,k->l", self.riemann, X, Y, Y)
        G = self.metric
        num = R @ G @ X
        den = (X @ G @ X) * (Y @ G @ Y) - (X @ G @ Y) ** 2
        return float(num / den)

    def riemann_lowered(self) -> np.ndarray:
        """``R_ijkm = g(R(e_i, e_j) e_k, e_m)``."""
        return np.einsum("ijkl,lm->ijkm", self.riemann, self.metric)


def _riemann(Gam: np.ndarray, dGam: np.ndarray) -> np.ndarray:
    """``dGam[..., m, k, i, j] = d_m Gamma^k_ij``; returns ``R[..., i, j, k, l] = R^l_{ijk}``."""
    term = np.einsum("...iljk->...ijkl", dGam) - np.einsum("...jlik->...ijkl", dGam)
    term = term + np.einsum("...lim,...mjk->...ijkl", Gam, Gam)
    return term - np.einsum("...ljm,...mik->...ijkl", Gam, Gam)


def _connection_jet(G, dG, d2G):
    """Christoffel symbols and their exact partial derivatives from a metric jet."""
    Ginv = _safe_inverse(G)
    first = _christoffel_first(dG)
    Gam = np.einsum("...kl,...lij->...kij", Ginv, first)
    # d_m Gamma_{lij}
    dfirst = 0.5 * (np.einsum("...ljim->...mlij", d2G) + np.einsum("...lijm->...mlij", d2G)
                    - np.einsum("...ijlm->...mlij", d2G))
    dGinv = -np.einsum("...ka,...abm,...bl->...mkl", Ginv, dG, Ginv, optimize=True)
    dGam = (np.einsum("...mkl,...lij->...mkij", dGinv, first)
            + np.einsum("...kl,...mlij->...mkij", Ginv, dfirst))
    return Ginv, Gam, dGam


def curvature(g: MetricField, p, method: str = "jet", step: float = 1e-4) -> CurvaturePack:
    """Riemann, Ricci and scalar curvature at ``p``.

    ``method="jet"`` differentiates the Christoffel symbols exactly from the
    second-order metric jet.  ``method="fd"`` uses a five-point central
    stencil of width ``2*step`` on the Christoffel symbols and refuses points
    closer than that to the chart boundary.
    """
    n = g.dim
    if method == "jet":
        p = g.check_point(p)
        G, dG, d2G = g.jet(p)
        _, Gam, dGam = _connection_jet(G, dG, d2G)
    elif method == "fd":
        p = g.check_point(p, margin=2 * step)
        G = g.matrix(p)
        Gam = christoffel(g, p)
        dGam = np.empty((n, n, n, n))
        for m in range(n):
            e = np.zeros(n)
            e[m] = step
            c = [christoffel(g, p + s * e) for s in (-2, -1, 1, 2)]
            dGam[m] = (c[0] - 8 * c[1] + 8 * c[2] - c[3]) / (12 * step)
    else:
        raise ValueError(f"unknown curvature method {method!r}")
    R = _riemann(Gam, dGam)
    ric = np.einsum("ijki->jk", R)
    ric = 0.5 * (ric + ric.T)
    scalar = float(np.einsum("jk,jk->", np.linalg.inv(G), ric))
    return CurvaturePack(Gam, R, ric, scalar, G)


def curvature_batch(g: MetricField, P) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``(G, Gamma, R)`` at points ``P`` (shape ``batch + (n,)``)."""
    G, dG, d2G = g.jet(np.asarray(P, float))
    _, Gam, dGam = _connection_jet(G, dG, d2G)
    return G, Gam, _riemann(Gam, dGam)


# --- frames --------------------------------------------------------------


def gram_schmidt(G: np.ndarray, vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormalize the columns of ``vectors`` w.r.t. ``G`` in index order."""
    V = np.array(vectors, dtype=float, copy=True)
    out = []
    for j in range(V.shape[1]):
        v = V[:, j]
        for u in out:
            v = v - (u @ G @ v) * u
        nrm = np.sqrt(v @ G @ v)
        if nrm < tol:
            raise RankDeficiencyError("vectors are linearly dependent")
        out.append(v / nrm)
    return np.column_stack(out) if out else np.zeros((V.shape[0], 0))


def orthonormal_frame(g: MetricField, p) -> np.ndarray:
    """Orthonormal frame from the coordinate vectors (columns)."""
    return gram_schmidt(g.matrix(p), np.eye(g.dim))


# --- geodesics -----------------------------------------------------------


def geodesic(g: MetricField, p, v, time: float, steps: int):
    """Integrate the geodesic equation with the classical fourth-order
    Runge-Kutta scheme on a fixed step.  Returns ``(points, velocities)``
    with ``steps + 1`` rows each."""
    if steps < 16:
        raise ValueError("steps must be at least 16")
    x = g.check_point(p).copy()
    u = np.asarray(v, float).copy()
    dt = time / steps

    def rhs(x, u):
        Gam = christoffel(g, x)
        return u, -np.einsum("kij,i,j->k", Gam, u, u)

    xs = [x.copy()]
    us = [u.copy()]
    for _ in range(steps):
        try:
            k1x, k1u = rhs(x, u)
            k2x, k2u = rhs(x + 0.5 * dt * k1x, u + 0.5 * dt * k1u)
            k3x, k3u = rhs(x + 0.5 * dt * k2x, u + 0.5 * dt * k2u)
            k4x, k4u = rhs(x + dt * k3x, u + dt * k3u)
        except ChartDomainError:
            raise GeodesicLeftChartError("geodesic left the chart", np.array(xs), np.array(us))
        x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        if not g.contains(x):
            raise GeodesicLeftChartError("geodesic left the chart", np.array(xs), np.array(us))
        xs.append(x.copy())
        us.append(u.copy())
    return np.array(xs), np.array(us)


# --- immersed submanifolds ----------------------------------------------


@dataclass
class ImmersedSubmanifold:
    """``parametrization(*u)`` returns the ``n`` ambient coordinates."""

    parametrization: Callable
    dim: int
    ambient: MetricField
    name: str = "submanifold"

    def point(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        comps = self.parametrization(*[u[..., a] for a in range(self.dim)])
        return np.stack([np.broadcast_to(jets.value(c), u.shape[:-1]) for c in comps], axis=-1)

    def jet(self, u):
        """Point, tangent vectors ``E[i, a]`` and second derivatives ``D2[i, a, b]``."""
        u = np.asarray(u, float)
        k = self.dim
        comps = self.parametrization(*jets.seed(u, 2))
        comps = [c if isinstance(c, Jet) else jets.constant(c, k) for c in comps]
        X = np.array([c.v for c in comps])
        E = np.array([c.g for c in comps])
        D2 = np.array([c.h for c in comps])
        return X, E, D2, comps


@dataclass
class SubmanifoldGeometry:
    point: np.ndarray
    tangent: np.ndarray  # (n, k) coordinate tangent vectors
    induced_metric: np.ndarray
    second_fundamental_form: np.ndarray  # (k, k, n)
    mean_curvature: np.ndarray  # (n,)
    ambient_metric: np.ndarray
    tol: float = 1e-7
    connection: np.ndarray = field(default=None, repr=False)  # (k, k, n): nabla_{E_a} E_b

    @property
    def mean_curvature_norm(self) -> float:
        H = self.mean_curvature
        return float(np.sqrt(H @ self.ambient_metric @ H))

    @property
    def second_fundamental_norm(self) -> float:
        """Norm of II measured in an orthonormal tangent frame."""
        hinv = np.linalg.inv(self.induced_metric)
        II = self.second_fundamental_form
        G = self.ambient_metric
        return float(np.sqrt(max(0.0, np.einsum("ac,bd,abi,ij,cdj->", hinv, hinv, II, G, II))))

    @property
    def is_minimal(self) -> bool:
        return self.mean_curvature_norm < self.tol

    @property
    def is_totally_geodesic(self) -> bool:
        return self.second_fundamental_norm < self.tol

    def normal_projector(self) -> np.ndarray:
        """Matrix ``P`` with ``P @ v`` the normal component of ``v``."""
        E = self.tangent
        G = self.ambient_metric
        hinv = np.linalg.inv(self.induced_metric)
        return np.eye(G.shape[0]) - E @ hinv @ E.T @ G


def _geometry_from_jet(X, E, D2, G, Gam, tol=1e-7) -> SubmanifoldGeometry:
    h = E.T @ G @ E
    if np.linalg.matrix_rank(h, tol=1e-12 * max(1.0, np.abs(h).max())) < E.shape[1]:
        raise RankDeficiencyError("parametrization differential is rank deficient")
    hinv = np.linalg.inv(h)
    # nabla_{E_a} E_b = d_a d_b X + Gamma(E_a, E_b)
    conn = np.einsum("iab->abi", D2) + np.einsum("kij,ia,jb->abk", Gam, E, E)
    P = np.eye(G.shape[0]) - E @ hinv @ E.T @ G
    II = np.einsum("ij,abj->abi", P, conn)
    II = 0.5 * (II + np.swapaxes(II, 0, 1))
    H = np.einsum("ab,abi->i", hinv, II)
    return SubmanifoldGeometry(X, E, h, II, H, G, tol, conn)


def submanifold_geometry(s: ImmersedSubmanifold, u, tol: float = 1e-7) -> SubmanifoldGeometry:
    X, E, D2, _ = s.jet(u)
    G, dG, _ = s.ambient.jet(X, order=1)
    Gam = christoffel_from_jet(G, dG)
    return _geometry_from_jet(X, E, D2, G, Gam, tol)


def restricted_laplacian(s: ImmersedSubmanifold, f, u) -> tuple[float, float]:
    """Intrinsic Laplacian of ``f|Sigma`` and the tangential trace of the
    ambient Hessian, computed independently.

    The intrinsic value uses only the pulled-back function and the induced
    metric with its own Levi-Civita connection.
    """
    f = field_on(s.ambient, f)
    u = np.asarray(u, float)
    k = s.dim
    seeds = jets.seed(u, 2)
    comps = s.parametrization(*seeds)
    comps = [c if isinstance(c, Jet) else jets.constant(c, k) for c in comps]
    # pulled-back function and induced metric as jets in the parameters
    fu = f.compose(*comps)
    raw = s.ambient.entries(*comps)
    n = s.ambient.dim
    E = np.array([c.g for c in comps])
    D2 = np.array([c.h for c in comps])
    Gv = np.array([[jets.value(raw[i][j]) for j in range(n)] for i in range(n)], dtype=float)
    dGu = np.zeros((n, n, k))
    for i in range(n):
        for j in range(n):
            if isinstance(raw[i][j], Jet):
                dGu[i, j] = raw[i][j].g
    h = E.T @ Gv @ E
    # d_c h_ab
    dh = (np.einsum("ijc,ia,jb->abc", dGu, E, E)
          + np.einsum("ij,ica,jb->abc", Gv, D2, E)
          + np.einsum("ij,ia,jcb->abc", Gv, E, D2))
    hinv = _safe_inverse(h)
    gam = np.einsum("cd,dab->cab", hinv, _christoffel_first(np.einsum("abc->abc", dh)))
    fg = np.atleast_1d(fu.g)
    fh = np.atleast_2d(fu.h)
    intrinsic = float(np.einsum("ab,ab->", hinv, fh - np.einsum("cab,c->ab", gam, fg)))
    Hm = hessian(s.ambient, f, np.array([c.v for c in comps], dtype=float))
    ambient_trace = float(np.einsum("ab,ia,jb,ij->", hinv, E, E, Hm))
    return intrinsic, ambient_trace
