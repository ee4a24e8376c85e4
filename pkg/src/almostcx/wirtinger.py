"""Wirtinger calculus helpers and finite-difference oracles.

Conventions used throughout the package::

    d/dz    = (d/dx - i d/dy) / 2
    d/dzbar = (d/dx + i d/dy) / 2
    Laplacian = 4 d^2/dz dzbar

Points of ``C^n`` are complex arrays with the coordinate index last; the
matching real vectors are ordered ``(x_1, y_1, ..., x_n, y_n)``.
"""
from __future__ import annotations

import numpy as np


def to_real(points):
    points = np.asarray(points, dtype=complex)
    out = np.empty(points.shape[:-1] + (2 * points.shape[-1],))
    out[..., 0::2] = points.real
    out[..., 1::2] = points.imag
    return out


def to_complex(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def real_to_wirtinger(grad):
    """Split a real-coordinate gradient (..., 2n) into (d/dz, d/dzbar)."""
    grad = np.asarray(grad)
    gx, gy = grad[..., 0::2], grad[..., 1::2]
    return 0.5 * (gx - 1j * gy), 0.5 * (gx + 1j * gy)


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of ``f`` (real vector -> any array) at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for p in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[p] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def fd_hessian(f, x, h=1e-4):
    """Fourth-order finite-difference Hessian of a scalar function of a real vector."""
    x = np.asarray(x, dtype=float)
    m = x.shape[-1]
    f0 = f(x)
    H = np.zeros((m, m), dtype=np.result_type(f0, float))
    eye = np.eye(m)
    for p in range(m):
        ep = eye[p]
        H[p, p] = (-f(x + 2 * h * ep) + 16 * f(x + h * ep) - 30 * f0
                   + 16 * f(x - h * ep) - f(x - 2 * h * ep)) / (12 * h * h)
        for q in range(p + 1, m):
            eq = eye[q]

            def cross(s):
                return (f(x + s * (ep + eq)) - f(x + s * (ep - eq))
                        - f(x - s * (ep - eq)) + f(x - s * (ep + eq))) / (4 * s * s)

            H[p, q] = H[q, p] = (4 * cross(h) - cross(2 * h)) / 3
    return H


def hessian_to_wirtinger(H):
    """Real Hessian (2n, 2n) -> (mixed [j,k] = d2/dz_j dzbar_k, holomorphic d2/dz_j dz_k)."""
    H = np.asarray(H)
    xx, xy = H[..., 0::2, 0::2], H[..., 0::2, 1::2]
    yx, yy = H[..., 1::2, 0::2], H[..., 1::2, 1::2]
    mixed = 0.25 * (xx + 1j * xy - 1j * yx + yy)
    holo = 0.25 * (xx - 1j * xy - 1j * yx - yy)
    return mixed, holo


def fd_laplacian_quarter(f, z, h):
    """``d^2 f / dz dzbar`` of a scalar function on ``C`` at ``z``, fourth order in ``h``."""
    z = complex(z)
    total = -60.0 * f(z)
    for d in (1.0, 1j):
        total += 16 * (f(z + h * d) + f(z - h * d)) - (f(z + 2 * h * d) + f(z - 2 * h * d))
    return total / (12 * h * h) / 4.0


def central_dz(grid, h):
    """Central-difference ``d/dz`` and ``d/dzbar`` of a 2-D grid indexed [iy, ix].

    Boundary rows/columns fall back to one-sided differences (``numpy.gradient``).
    """
    gy, gx = np.gradient(grid, h, axis=(-2, -1))
    return 0.5 * (gx - 1j * gy), 0.5 * (gx + 1j * gy)
