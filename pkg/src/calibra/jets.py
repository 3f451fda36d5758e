"""Second-order forward-mode jets.

A :class:`Jet` carries a value together with its gradient and (optionally)
its Hessian with respect to a fixed set of seed variables.  All three parts
may carry leading batch dimensions, so a single jet can represent a whole
grid of evaluation points::

    v.shape == batch
    g.shape == batch + (n,)
    h.shape == batch + (n, n)      # or None for first-order jets

The elementary functions in this module accept plain floats/arrays as well
as jets, which lets the same expression code run in value-only mode.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("v", "g", "h")
    __array_priority__ = 1000

    def __init__(self, v, g, h=None):
        self.v = np.asarray(v, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.h = None if h is None else np.asarray(h, dtype=float)

    @property
    def nvars(self) -> int:
        return self.g.shape[-1]

    @property
    def order(self) -> int:
        return 1 if self.h is None else 2

    def __repr__(self) -> str:
        return f"Jet(v={self.v!r}, g={self.g!r}, h={self.h!r})"

    # arithmetic -----------------------------------------------------------

    def __neg__(self):
        return Jet(-self.v, -self.g, None if self.h is None else -self.h)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            h = None if (self.h is None or other.h is None) else self.h + other.h
            return Jet(self.v + other.v, self.g + other.g, h)
        return Jet(self.v + other, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            v = a.v * b.v
            g = a.v[..., None] * b.g + b.v[..., None] * a.g
            h = None
            if a.h is not None and b.h is not None:
                gg = a.g[..., :, None] * b.g[..., None, :]
                h = (a.v[..., None, None] * b.h + b.v[..., None, None] * a.h
                     + gg + np.swapaxes(gg, -1, -2))
            return Jet(v, g, h)
        c = np.asarray(other, dtype=float)
        return Jet(self.v * c, self.g * c[..., None],
                   None if self.h is None else self.h * c[..., None, None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * _reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, other):
        if isinstance(other, Jet):
            return exp(other * log(self))
        p = float(other)
        if p == int(p) and 0 <= p <= 4:
            k = int(p)
            if k == 0:
                return Jet(np.ones_like(self.v), np.zeros_like(self.g),
                           None if self.h is None else np.zeros_like(self.h))
            out = self
            for _ in range(k - 1):
                out = out * self
            return out
        v = self.v
        return _chain(self, v ** p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def __rpow__(self, other):
        return exp(self * np.log(np.asarray(other, dtype=float)))


def _chain(x: Jet, f0, f1, f2) -> Jet:
    """Apply a univariate function with derivatives ``f0, f1, f2`` to ``x``."""
    g = f1[..., None] * x.g
    h = None
    if x.h is not None:
        h = f1[..., None, None] * x.h + f2[..., None, None] * (x.g[..., :, None] * x.g[..., None, :])
    return Jet(f0, g, h)


def _reciprocal(x: Jet) -> Jet:
    v = x.v
    return _chain(x, 1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3)


def seed(point, order: int = 2) -> list[Jet]:
    """Independent-variable jets at ``point`` (shape ``batch + (n,)``)."""
    p = np.asarray(point, dtype=float)
    n = p.shape[-1]
    batch = p.shape[:-1]
    eye = np.eye(n)
    out = []
    for i in range(n):
        g = np.broadcast_to(eye[i], batch + (n,)).copy()
        h = np.zeros(batch + (n, n)) if order == 2 else None
        out.append(Jet(p[..., i], g, h))
    return out


def constant(value, nvars: int, order: int = 2) -> Jet:
    v = np.asarray(value, dtype=float)
    h = np.zeros(v.shape + (nvars, nvars)) if order == 2 else None
    return Jet(v, np.zeros(v.shape + (nvars,)), h)


def lift(value, like: Jet) -> Jet:
    """Promote a constant to a jet with the same shape and order as ``like``."""
    if isinstance(value, Jet):
        return value
    v = np.broadcast_to(np.asarray(value, dtype=float), like.v.shape).copy()
    return constant(v, like.nvars, like.order)


def value(x):
    return x.v if isinstance(x, Jet) else np.asarray(x, dtype=float)


# elementary functions ---------------------------------------------------


def sin(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.v), np.cos(x.v)
        return _chain(x, s, c, -s)
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.v), np.cos(x.v)
        return _chain(x, c, -s, -c)
    return np.cos(x)


def tan(x):
    if isinstance(x, Jet):
        t = np.tan(x.v)
        sec2 = 1.0 + t * t
        return _chain(x, t, sec2, 2.0 * t * sec2)
    return np.tan(x)


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.v)
        return _chain(x, e, e, e)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        v = x.v
        return _chain(x, np.log(v), 1.0 / v, -1.0 / v ** 2)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        s = np.sqrt(x.v)
        return _chain(x, s, 0.5 / s, -0.25 / (s * x.v))
    return np.sqrt(x)


def sinh(x):
    if isinstance(x, Jet):
        s, c = np.sinh(x.v), np.cosh(x.v)
        return _chain(x, s, c, s)
    return np.sinh(x)


def cosh(x):
    if isinstance(x, Jet):
        s, c = np.sinh(x.v), np.cosh(x.v)
        return _chain(x, c, s, c)
    return np.cosh(x)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "sinh": sinh,
    "cosh": cosh,
}
