"""Riemannian submersions: splittings, lifts and fibre-wise pushdowns."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from calibra import jets
from calibra.jets import Jet
from calibra.manifold import (
    ImmersedSubmanifold,
    MetricField,
    ScalarField,
    SubmanifoldGeometry,
    _safe_inverse,
    field_on,
    hessian,
    submanifold_geometry,
)


class NonCompactFibreError(ValueError):
    pass


class GridTooCoarseError(ValueError):
    pass


class NotInvariantError(ValueError):
    pass


def _values(comps, batch) -> np.ndarray:
    return np.stack([np.broadcast_to(jets.value(c), batch) for c in comps], axis=-1)


@dataclass
class RiemannianSubmersion:
    """Projection from a total-space chart onto a base chart.

    ``projection(*x)`` returns the ``m`` base coordinates and
    ``fibre_param(*b, *y)`` the ``n`` total-space coordinates of the fibre
    point with parameter ``y`` over ``b``.  Fibre parameters live in the box
    ``[fibre_lower, fibre_upper)``; compact fibres have every direction
    periodic.
    """

    total: MetricField
    base: MetricField
    projection: Callable
    fibre_param: Callable
    fibre_lower: np.ndarray
    fibre_upper: np.ndarray
    periodic: Sequence[bool] = None
    name: str = "submersion"
    cartesian: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        self.fibre_lower = np.asarray(self.fibre_lower, float)
        self.fibre_upper = np.asarray(self.fibre_upper, float)
        if self.periodic is None:
            self.periodic = [True] * self.fibre_dim

    @property
    def n(self) -> int:
        return self.total.dim

    @property
    def m(self) -> int:
        return self.base.dim

    @property
    def fibre_dim(self) -> int:
        return self.n - self.m

    @property
    def compact_fibres(self) -> bool:
        return all(self.periodic)

    def project(self, p) -> np.ndarray:
        p = np.asarray(p, float)
        return _values(self.projection(*[p[..., i] for i in range(self.n)]), p.shape[:-1])

    def dpi(self, p) -> np.ndarray:
        """Differential of the projection, shape ``(m, n)``."""
        p = np.asarray(p, float)
        comps = self.projection(*jets.seed(p, 1))
        return np.array([c.g if isinstance(c, Jet) else np.zeros(self.n) for c in comps])

    def fibre_point(self, b, y) -> np.ndarray:
        b = np.asarray(b, float)
        y = np.asarray(y, float)
        batch = np.broadcast_shapes(b.shape[:-1], y.shape[:-1])
        b = np.broadcast_to(b, batch + (self.m,))
        y = np.broadcast_to(y, batch + (self.fibre_dim,))
        args = [b[..., i] for i in range(self.m)] + [y[..., a] for a in range(self.fibre_dim)]
        return _values(self.fibre_param(*args), batch)

    def fibre(self, b) -> ImmersedSubmanifold:
        b = np.asarray(b, float)
        k = self.fibre_dim

        def param(*y):
            like = y[0]
            bb = [jets.lift(float(bi), like) if isinstance(like, Jet) else float(bi) for bi in b]
            return self.fibre_param(*bb, *y)

        return ImmersedSubmanifold(param, k, self.total, f"fibre over {b}")

    def fibre_jet(self, b, y, order: int = 2):
        """Jets of the fibre parametrization in the joint variables ``(b, y)``.

        Returns ``X`` (batch, n), ``D`` (batch, n, m+k) and ``D2``
        (batch, n, m+k, m+k) or ``None`` for first order.
        """
        b = np.asarray(b, float)
        y = np.asarray(y, float)
        batch = y.shape[:-1]
        bv = np.broadcast_to(b, batch + (self.m,))
        seeds = jets.seed(np.concatenate([bv, y], axis=-1), order)
        comps = self.fibre_param(*seeds)
        nv = self.m + self.fibre_dim
        comps = [c if isinstance(c, Jet) else jets.constant(np.broadcast_to(c, batch), nv, order)
                 for c in comps]
        X = np.stack([c.v for c in comps], axis=-1)
        D = np.stack([c.g for c in comps], axis=-2)
        D2 = np.stack([c.h for c in comps], axis=-3) if order == 2 else None
        return X, D, D2

    def fibre_grid(self, grid) -> tuple[np.ndarray, float, tuple]:
        """Periodic tensor grid of fibre parameters, cell volume and shape."""
        if not self.compact_fibres:
            raise NonCompactFibreError(f"fibres of {self.name} are not compact")
        k = self.fibre_dim
        counts = (int(grid),) * k if np.isscalar(grid) else tuple(int(c) for c in grid)
        axes = [self.fibre_lower[a] + (self.fibre_upper[a] - self.fibre_lower[a]) * np.arange(c) / c
                for a, c in enumerate(counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        Y = np.stack(mesh, axis=-1).reshape(-1, k)
        cell = float(np.prod((self.fibre_upper - self.fibre_lower) / np.array(counts)))
        return Y, cell, counts


# --- splitting and lifts ----------------------------------------------------


def _lift_matrix(rs: RiemannianSubmersion, p) -> tuple[np.ndarray, np.ndarray]:
    D = rs.dpi(p)
    Ginv = _safe_inverse(rs.total.matrix(p))
    M = D @ Ginv @ D.T
    if np.linalg.matrix_rank(M) < rs.m:
        raise np.linalg.LinAlgError("projection differential is rank deficient")
    # horizontal lift of base vector X is L @ X
    L = Ginv @ D.T @ np.linalg.inv(M)
    return L, D


def split(rs: RiemannianSubmersion, p, v) -> tuple[np.ndarray, np.ndarray]:
    """``(vertical, horizontal)`` components of ``v`` at ``p``."""
    L, D = _lift_matrix(rs, p)
    v = np.asarray(v, float)
    hor = L @ (D @ v)
    return v - hor, hor


def horizontal_lift(rs: RiemannianSubmersion, X, p) -> np.ndarray:
    L, _ = _lift_matrix(rs, p)
    return L @ np.asarray(X, float)


def pullback(rs: RiemannianSubmersion, F) -> ScalarField:
    """``f = F o pi`` as a scalar field on the total space."""
    F = field_on(rs.base, F)
    return ScalarField(lambda *x: F.compose(*rs.projection(*x)), rs.n, f"pi*({F.name})")


def base_hessian(rs: RiemannianSubmersion, F, b) -> np.ndarray:
    return hessian(rs.base, F, b)


def hessian_transfer_residual(rs: RiemannianSubmersion, F, b, X, fibre_samples: int = 32) -> float:
    """``max_y |Hess_M(pi*F)(X~, X~) - Hess_B(F)(X, X)|`` over fibre samples."""
    F = field_on(rs.base, F)
    f = pullback(rs, F)
    b = np.asarray(b, float)
    X = np.asarray(X, float)
    HB = hessian(rs.base, F, b)
    target = X @ HB @ X
    per_dim = max(1, int(round(fibre_samples ** (1.0 / rs.fibre_dim))))
    Y, _, _ = rs.fibre_grid(per_dim)
    worst = 0.0
    for y in Y:
        p = rs.fibre_point(b, y)
        Xt = horizontal_lift(rs, X, p)
        HM = hessian(rs.total, f, p)
        worst = max(worst, abs(Xt @ HM @ Xt - target))
    return float(worst)


def fibre_geometry(rs: RiemannianSubmersion, b, y, tol: float = 1e-7) -> SubmanifoldGeometry:
    return submanifold_geometry(rs.fibre(b), y, tol)


# --- fibre quadrature --------------------------------------------------------

_CHUNK = 8192


def _fibre_density(rs: RiemannianSubmersion, b, Y) -> tuple[np.ndarray, np.ndarray]:
    """Points and induced volume density ``sqrt(det h)`` at fibre parameters ``Y``."""
    k = rs.fibre_dim
    b = np.asarray(b, float)
    Ys = np.asarray(Y, float)
    bv = [float(x) for x in b]
    seeds = jets.seed(Ys, order=1)
    comps = rs.fibre_param(*[jets.lift(x, seeds[0]) for x in bv], *seeds)
    comps = [c if isinstance(c, Jet) else jets.constant(np.broadcast_to(c, Ys.shape[:-1]), k, 1)
             for c in comps]
    X = np.stack([c.v for c in comps], axis=-1)
    E = np.stack([c.g for c in comps], axis=-2)  # (N, n, k)
    G = rs.total.matrix(X)
    h = np.swapaxes(E, -1, -2) @ G @ E
    return X, np.sqrt(np.linalg.det(h))


def _pairwise_sum(x: np.ndarray) -> float:
    x = np.asarray(x, float).ravel()
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0]) if x.size else 0.0


def fibre_integral(rs: RiemannianSubmersion, f, b, grid=64) -> float:
    """Trapezoidal (periodic) quadrature of ``f`` against the fibre volume form."""
    counts = (grid,) if np.isscalar(grid) else tuple(grid)
    if min(counts) < 32:
        raise GridTooCoarseError("fibre quadrature needs at least 32 points per direction")
    f = field_on(rs.total, f)
    Y, cell, _ = rs.fibre_grid(grid)
    parts = []
    for start in range(0, len(Y), _CHUNK):
        X, dens = _fibre_density(rs, b, Y[start:start + _CHUNK])
        parts.append(f(X) * dens)
    return _pairwise_sum(np.concatenate(parts)) * cell


def fibre_volume(rs: RiemannianSubmersion, b, grid=64) -> float:
    return fibre_integral(rs, 1.0, b, grid)


def haar_pushdown(rs: RiemannianSubmersion, f, b, grid=64) -> float:
    """Average of ``f`` over the orbit with respect to the normalized angle measure."""
    if not rs.compact_fibres:
        raise NonCompactFibreError(f"fibres of {rs.name} are not torus orbits")
    f = field_on(rs.total, f)
    Y, _, _ = rs.fibre_grid(grid)
    return _pairwise_sum(f(rs.fibre_point(b, Y))) / len(Y)


def fibre_supremum(rs: RiemannianSubmersion, f, b, grid=64, refine_iters: int = 50) -> float:
    """Grid maximum over the fibre followed by a local BFGS ascent."""
    f = field_on(rs.total, f)
    b = np.asarray(b, float)
    Y, _, _ = rs.fibre_grid(grid)
    vals = f(rs.fibre_point(b, Y))
    i = int(np.argmax(vals))
    best = float(vals[i])
    if refine_iters <= 0:
        return best
    k = rs.fibre_dim

    def neg(y):
        seeds = jets.seed(np.asarray(y, float), 1)
        comps = rs.fibre_param(*[jets.lift(float(x), seeds[0]) for x in b], *seeds)
        comps = [c if isinstance(c, Jet) else jets.constant(c, k, 1) for c in comps]
        out = f.compose(*comps)
        if not isinstance(out, Jet):
            return -float(out), np.zeros(k)
        return -float(out.v), -np.asarray(out.g, float)

    res = minimize(neg, Y[i], jac=True, method="BFGS",
                   options={"maxiter": refine_iters, "gtol": 1e-13})
    return max(best, float(-res.fun))


@dataclass
class Pushdown:
    """A base function built from ``source`` on the total space."""

    kind: str
    rs: RiemannianSubmersion
    source: ScalarField
    grid: object = 64
    refine_iters: int = 50
    verify_grid: int = 16

    def __post_init__(self):
        if self.kind not in ("invariant", "integral", "supremum", "haar"):
            raise ValueError(f"unknown pushdown kind {self.kind!r}")
        self.source = field_on(self.rs.total, self.source)

    def oscillation(self, b) -> float:
        Y, _, _ = self.rs.fibre_grid(self.verify_grid)
        vals = self.source(self.rs.fibre_point(b, Y))
        return float(vals.max() - vals.min())

    def __call__(self, b) -> float:
        b = np.atleast_1d(np.asarray(b, float))
        if self.kind == "invariant":
            if self.oscillation(b) >= 1e-8:
                raise NotInvariantError(f"{self.source.name} is not constant on the fibre over {b}")
            return float(self.source(self.rs.fibre_point(b, self.rs.fibre_lower)))
        if self.kind == "integral":
            return fibre_integral(self.rs, self.source, b, self.grid)
        if self.kind == "haar":
            return haar_pushdown(self.rs, self.source, b, self.grid)
        return fibre_supremum(self.rs, self.source, b, self.grid, self.refine_iters)


# --- base convexity ---------------------------------------------------------


@dataclass
class ConvexityReport:
    passed: bool
    mode: str
    worst: float  # smallest eigenvalue (hessian) or smallest midpoint gap
    witness: list
    checked: int

    @property
    def residual(self) -> float:
        return max(0.0, -self.worst)


def _base_grid(lower, upper, points) -> list[np.ndarray]:
    lower = np.atleast_1d(np.asarray(lower, float))
    upper = np.atleast_1d(np.asarray(upper, float))
    counts = [points] * len(lower) if np.isscalar(points) else list(points)
    if min(counts) < 8:
        raise GridTooCoarseError("convexity check needs at least 8 grid points per axis")
    return [np.linspace(lo, hi, c) for lo, hi, c in zip(lower, upper, counts)]


def fd_hessian(F: Callable, b, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient and Hessian of a base function."""
    b = np.atleast_1d(np.asarray(b, float))
    m = len(b)
    f0 = F(b)
    grad = np.zeros(m)
    H = np.zeros((m, m))
    E = np.eye(m) * step
    for i in range(m):
        fp, fm = F(b + E[i]), F(b - E[i])
        grad[i] = (fp - fm) / (2 * step)
        H[i, i] = (fp - 2 * f0 + fm) / step ** 2
        for j in range(i + 1, m):
            H[i, j] = H[j, i] = (F(b + E[i] + E[j]) - F(b + E[i] - E[j])
                                 - F(b - E[i] + E[j]) + F(b - E[i] - E[j])) / (4 * step ** 2)
    return grad, H


def covariant_fd_hessian(F: Callable, b, step: float, metric: MetricField | None = None) -> np.ndarray:
    """FD Hessian corrected by the base Christoffel symbols when ``metric`` is given."""
    from calibra.manifold import christoffel

    grad, H = fd_hessian(F, b, step)
    if metric is not None:
        H = H - np.einsum("kij,k->ij", christoffel(metric, np.atleast_1d(b)), grad)
    return H


def base_convexity_check(F: Callable, lower, upper, points=64, mode: str = "hessian",
                         tol: float = 1e-8, step: float | None = None,
                         metric: MetricField | None = None) -> ConvexityReport:
    """Check convexity of ``F`` on a box of the base.

    ``hessian`` mode: smallest eigenvalue of the FD Hessian (with respect to
    ``metric`` when given) is at least ``-tol`` at every grid point.
    ``midpoint`` mode: ``F((a+c)/2) <= (F(a)+F(c))/2 + tol`` on every grid
    segment along the coordinate axes, which are assumed to be geodesics.
    """
    axes = _base_grid(lower, upper, points)
    lower = np.array([a[0] for a in axes])
    upper = np.array([a[-1] for a in axes])
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, len(axes))
    worst, witness, checked = np.inf, None, 0
    if mode == "hessian":
        h = step if step is not None else 1e-3 * float(np.max(upper - lower))
        for b in pts:
            H = covariant_fd_hessian(F, b, h, metric)
            if metric is not None:
                from scipy.linalg import eigh
                w = eigh(H, metric.matrix(b), eigvals_only=True)
            else:
                w = np.linalg.eigvalsh(H)
            checked += 1
            if w[0] < worst:
                worst, witness = float(w[0]), b.tolist()
    elif mode == "midpoint":
        vals = np.vectorize(lambda *idx: F(mesh[idx]), otypes=[float])(
            *np.indices(mesh.shape[:-1]))
        shape = vals.shape
        for axis in range(len(shape)):
            nax = shape[axis]
            for span in range(1, (nax - 1) // 2 + 1):
                lo = np.take(vals, range(0, nax - 2 * span), axis=axis)
                mid = np.take(vals, range(span, nax - span), axis=axis)
                hi = np.take(vals, range(2 * span, nax), axis=axis)
                gap = 0.5 * (lo + hi) - mid
                checked += gap.size
                j = np.unravel_index(int(np.argmin(gap)), gap.shape)
                if gap[j] < worst:
                    worst = float(gap[j])
                    idx = list(j)
                    idx[axis] += span
                    witness = mesh[tuple(idx)].tolist()
    else:
        raise ValueError(f"unknown convexity mode {mode!r}")
    return ConvexityReport(worst >= -tol, mode, worst, witness, checked)
