"""Forward-mode second-order jets over real coordinates.

A :class:`Jet` carries a (complex, possibly batched) value together with its
gradient and Hessian with respect to the real coordinates
``(x_1, y_1, ..., x_n, y_n)`` of ``C^n``.  Arithmetic propagates derivatives
exactly, so closed-form expressions get exact Wirtinger derivatives without
finite differences.

Holomorphic scalar functions (``log``, ``exp``, ``sqrt``) use the complex
chain rule, which is valid for real-coordinate derivatives as well.
"""
from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("v", "g", "H")

    def __init__(self, v, g, H=None):
        self.v = np.asarray(v, dtype=complex)
        self.g = np.asarray(g, dtype=complex)
        self.H = None if H is None else np.asarray(H, dtype=complex)

    @property
    def m(self) -> int:
        return self.g.shape[-1]

    @property
    def order(self) -> int:
        return 1 if self.H is None else 2

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, c, shape, m, order=2):
        v = np.broadcast_to(np.asarray(c, dtype=complex), shape).copy()
        g = np.zeros(shape + (m,), dtype=complex)
        H = np.zeros(shape + (m, m), dtype=complex) if order == 2 else None
        return cls(v, g, H)

    @classmethod
    def variables(cls, points, order=2):
        """Jets of the coordinate functions ``z_1..z_n`` at ``points`` (..., n)."""
        points = np.asarray(points, dtype=complex)
        shape, n = points.shape[:-1], points.shape[-1]
        m = 2 * n
        out = []
        for j in range(n):
            g = np.zeros(shape + (m,), dtype=complex)
            g[..., 2 * j] = 1.0
            g[..., 2 * j + 1] = 1j
            H = np.zeros(shape + (m, m), dtype=complex) if order == 2 else None
            out.append(cls(points[..., j], g, H))
        return out

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.v.shape, self.m, self.order)

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        o = self._lift(other)
        H = None if self.H is None or o.H is None else self.H + o.H
        return Jet(self.v + o.v, self.g + o.g, H)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.g, None if self.H is None else -self.H)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, dtype=complex)
            H = None if self.H is None else self.H * c[..., None, None]
            return Jet(self.v * c, self.g * c[..., None], H)
        a, b = self, other
        v = a.v * b.v
        g = a.g * b.v[..., None] + b.g * a.v[..., None]
        H = None
        if a.H is not None and b.H is not None:
            outer = a.g[..., :, None] * b.g[..., None, :]
            H = (a.H * b.v[..., None, None] + b.H * a.v[..., None, None]
                 + outer + np.swapaxes(outer, -1, -2))
        return Jet(v, g, H)

    __rmul__ = __mul__

    def _compose(self, f0, f1, f2):
        """Apply a scalar function with derivatives f0, f1, f2 at self.v."""
        g = f1[..., None] * self.g
        H = None
        if self.H is not None:
            H = (f2[..., None, None] * self.g[..., :, None] * self.g[..., None, :]
                 + f1[..., None, None] * self.H)
        return Jet(f0, g, H)

    def reciprocal(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / self.v
        return self._compose(inv, -inv ** 2, 2 * inv ** 3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=complex))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        k = int(k)
        if k < 0:
            return (self ** (-k)).reciprocal()
        if k == 0:
            return Jet.constant(1.0, self.v.shape, self.m, self.order)
        v = self.v
        f0 = v ** k
        f1 = k * v ** (k - 1)
        f2 = k * (k - 1) * v ** (k - 2) if k >= 2 else np.zeros_like(v)
        return self._compose(f0, f1, f2)

    # non-holomorphic primitives ------------------------------------------
    def conj(self):
        return Jet(np.conj(self.v), np.conj(self.g),
                   None if self.H is None else np.conj(self.H))

    def real(self):
        return Jet(self.v.real, self.g.real, None if self.H is None else self.H.real)

    def imag(self):
        return Jet(self.v.imag, self.g.imag, None if self.H is None else self.H.imag)

    def abs(self):
        # |f| = sqrt(f * conj f); undefined where f = 0
        return (self * self.conj()).real().sqrt()

    # holomorphic primitives ------------------------------------------
    def log(self):
        v = self.v
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._compose(np.log(v), 1.0 / v, -1.0 / v ** 2)

    def exp(self):
        e = np.exp(self.v)
        return self._compose(e, e, e)

    def sqrt(self):
        s = np.sqrt(self.v)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._compose(s, 0.5 / s, -0.25 / (s * self.v))

    # Wirtinger views ---------------------------------------------------
    def dz(self):
        """``d/dz_j`` for each j, shape (..., n)."""
        return 0.5 * (self.g[..., 0::2] - 1j * self.g[..., 1::2])

    def dzbar(self):
        return 0.5 * (self.g[..., 0::2] + 1j * self.g[..., 1::2])

    def d2_mixed(self):
        """``d^2/dz_j dzbar_k`` as an (..., n, n) array indexed [j, k]."""
        H = self.H
        xx, xy = H[..., 0::2, 0::2], H[..., 0::2, 1::2]
        yx, yy = H[..., 1::2, 0::2], H[..., 1::2, 1::2]
        return 0.25 * (xx + 1j * xy - 1j * yx + yy)

    def d2_holo(self):
        """``d^2/dz_j dz_k`` as an (..., n, n) array."""
        H = self.H
        xx, xy = H[..., 0::2, 0::2], H[..., 0::2, 1::2]
        yx, yy = H[..., 1::2, 0::2], H[..., 1::2, 1::2]
        return 0.25 * (xx - 1j * xy - 1j * yx - yy)


def as_jet(x, like: Jet) -> Jet:
    return like._lift(x)
