"""Pseudoholomorphic discs with a prescribed 1-jet at the center.

A disc ``u`` on ``|zeta| <= rho`` is ``J``-holomorphic when
``d(u-bar)/d zeta = Q(u) du/d zeta``, i.e. ``du/dzbar = conj(Q(u) du/d zeta)``.

The solver represents ``u`` as a polynomial in ``s = zeta/rho`` and
``conj(s)`` and iterates ``u <- p + v zeta + T[conj(Q(u) u_zeta)]`` with the
Cauchy-Green operator ``T`` of the disc, which acts exactly on monomials:

    T[s^a sbar^b] = rho (s^a sbar^(b+1) - [a > b] s^(a-b-1)) / (b + 1).

The right-hand side is projected onto polynomials by weighted least squares
on polar Gauss nodes; the 1-jet is re-pinned every iteration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import fftconvolve

from .errors import AdmissibilityError, DomainError, LeftDomainError, RadiusTooLargeError, SolverError
from .structure import ADMISSIBLE_NORM, StructureField, operator_norm


# ---------------------------------------------------------------------------
# grid Cauchy-Green operator
# ---------------------------------------------------------------------------

def disc_grid(n: int, rho: float = 1.0):
    """Cell-centred ``n x n`` grid on ``[-rho, rho]^2``: (zeta, mask, h), indexed [iy, ix]."""
    h = 2.0 * rho / n
    c = -rho + (np.arange(n) + 0.5) * h
    zeta = c[None, :] + 1j * c[:, None]
    return zeta, np.abs(zeta) <= rho, h


def grid_convolve(f, h, kernel):
    """``sum_j f_j kernel(zeta_i - zeta_j)`` over a square grid; the singular offset contributes 0."""
    f = np.asarray(f, dtype=complex)
    n = f.shape[-1]
    k = np.arange(-(n - 1), n) * h
    d = k[None, :] + 1j * k[:, None]
    d[n - 1, n - 1] = 1.0
    ker = np.asarray(kernel(d), dtype=complex)
    ker[n - 1, n - 1] = 0.0
    return fftconvolve(f, ker, mode="same")


def cauchy_green(f, rho: float = 1.0):
    """``T f(zeta) = (1/pi) int_{|w|<rho} f(w) / (zeta - w) dA(w)`` on the disc grid.

    ``f`` is an ``n x n`` grid from :func:`disc_grid`; values outside the disc
    are ignored and the output is zero there.  Midpoint rule per cell, with
    the singular cell contributing nothing.
    """
    f = np.asarray(f, dtype=complex)
    n = f.shape[-1]
    zeta, mask, h = disc_grid(n, rho)
    out = grid_convolve(np.where(mask, f, 0.0), h, lambda d: h * h / (np.pi * d))
    return np.where(mask, out, 0.0)


# ---------------------------------------------------------------------------
# polynomial representation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _monomials(degree):
    """Exponent pairs (a, b) with a + b <= degree, ordered by total degree."""
    pairs = [(a, d - a) for d in range(degree + 1) for a in range(d, -1, -1)]
    A = np.array([p[0] for p in pairs])
    B = np.array([p[1] for p in pairs])
    return A, B


def _basis(s, degree):
    A, B = _monomials(degree)
    pw = np.power.outer(s, np.arange(degree + 1))
    return pw[..., A] * np.conj(pw)[..., B]


@lru_cache(maxsize=None)
def _projector(degree):
    """Collocation nodes on the unit disc and the weighted least-squares map onto degree ``degree``."""
    nr = degree + 3
    nt = 2 * degree + 4
    x, w = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * w * r
    th = 2 * np.pi * np.arange(nt) / nt
    s = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    weights = np.sqrt(np.repeat(wr, nt) * (2 * np.pi / nt))
    V = _basis(s, degree)
    P = np.linalg.pinv(V * weights[:, None]) * weights[None, :]
    return s, P


@lru_cache(maxsize=None)
def _transfer(degree):
    """Matrix sending degree-(degree-1) coefficients to coefficients of T on the unit disc."""
    Ain, Bin = _monomials(degree - 1)
    Aout, Bout = _monomials(degree)
    index = {(a, b): k for k, (a, b) in enumerate(zip(Aout, Bout))}
    M = np.zeros((Aout.size, Ain.size))
    for k, (a, b) in enumerate(zip(Ain, Bin)):
        M[index[(a, b + 1)], k] += 1.0 / (b + 1)
        if a > b:
            M[index[(a - b - 1, 0)], k] -= 1.0 / (b + 1)
    return M


@dataclass(frozen=True)
class DiscPolynomial:
    """``u(zeta) = sum c_ab s^a sbar^b`` with ``s = zeta / rho``; ``coeffs`` has shape (K, n)."""

    coeffs: np.ndarray
    rho: float
    degree: int

    def evaluate(self, zeta, chunk=8192):
        """``(u, u_zeta, u_zetabar, u_zeta zetabar)`` at points, each shape (..., n)."""
        zeta = np.asarray(zeta, dtype=complex)
        flat = zeta.ravel() / self.rho
        A, B = _monomials(self.degree)
        c = self.coeffs
        outs = [np.empty((flat.size, c.shape[1]), dtype=complex) for _ in range(4)]
        cz = c * (A / self.rho)[:, None]
        czb = c * (B / self.rho)[:, None]
        czzb = c * (A * B / self.rho ** 2)[:, None]
        Am1, Bm1 = np.maximum(A - 1, 0), np.maximum(B - 1, 0)
        for lo in range(0, flat.size, chunk):
            s = flat[lo:lo + chunk]
            pw = np.power.outer(s, np.arange(self.degree + 1))
            pc = np.conj(pw)
            outs[0][lo:lo + chunk] = (pw[:, A] * pc[:, B]) @ c
            outs[1][lo:lo + chunk] = (pw[:, Am1] * pc[:, B]) @ cz
            outs[2][lo:lo + chunk] = (pw[:, A] * pc[:, Bm1]) @ czb
            outs[3][lo:lo + chunk] = (pw[:, Am1] * pc[:, Bm1]) @ czzb
        return tuple(o.reshape(zeta.shape + (c.shape[1],)) for o in outs)

    def __call__(self, zeta):
        return self.evaluate(zeta)[0]


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JetSpec:
    """Center ``p``, derivative ``v = u_zeta(0)`` and radius ``rho`` of a disc."""

    center: np.ndarray
    v: np.ndarray
    rho: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=complex)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=complex)))
        if self.center.shape != self.v.shape:
            raise ValueError("center and derivative must have the same dimension")
        if not (0 < self.rho <= 1):
            raise ValueError("disc radius must lie in (0, 1]")
        if not np.all(np.isfinite(self.v)):
            raise ValueError("derivative must be finite")


@dataclass(frozen=True)
class DiscSolution:
    """A solved disc sampled on an ``N x N`` grid of ``[-rho, rho]^2`` (outside cells masked)."""

    jet: JetSpec
    poly: DiscPolynomial = field(repr=False)
    zeta: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    u_z: np.ndarray = field(repr=False)
    u_zb: np.ndarray = field(repr=False)
    u_zzb: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    iterations: int = 0
    ratios: tuple = ()
    tol: float = 1e-8

    @property
    def residual_sup(self) -> float:
        return float(np.max(np.abs(self.residual[self.mask])))

    @property
    def h(self) -> float:
        return 2.0 * self.jet.rho / self.zeta.shape[-1]

    def center_jet(self):
        """``(u, u_zeta, u_zetabar, u_zeta zetabar)`` at ``zeta = 0``."""
        return tuple(x[0] for x in self.poly.evaluate(np.zeros(1)))

    def at(self, zeta):
        return self.poly.evaluate(zeta)

    def fd_derivatives(self):
        """Central-difference ``u_zeta`` and ``u_zetabar`` from the value grid alone."""
        h = self.h
        gy, gx = np.gradient(self.u, h, axis=(0, 1))
        return 0.5 * (gx - 1j * gy), 0.5 * (gx + 1j * gy)


def _e1_residual(s: StructureField, u, u_z, u_zb):
    q = s.q_at(u)
    return np.conj(u_zb) - np.einsum("...rc,...c->...r", q, u_z)


def solve_disc(s: StructureField, jet: JetSpec, grid_n: int = 256, tol: float = 1e-8,
               max_iter: int = 100, degree: int = 16) -> DiscSolution:
    """Solve ``d(u-bar)/d zeta = Q(u) u_zeta`` on ``|zeta| <= rho`` with the 1-jet of ``jet``.

    Raises :class:`RadiusTooLargeError` when the iteration stops contracting,
    :class:`LeftDomainError` when an iterate leaves the structure's box and
    :class:`SolverError` when the final residual exceeds ``tol``.
    """
    n = s.n
    if jet.center.size != n:
        raise ValueError(f"jet dimension {jet.center.size} != structure dimension {n}")
    if not s.contains(jet.center[None])[0]:
        raise DomainError("disc center outside the structure domain")
    rho = float(jet.rho)
    s_nodes, P = _projector(degree - 1)
    M = _transfer(degree)
    A, B = _monomials(degree)
    K = A.size
    V = _basis(s_nodes, degree)
    Vz = np.zeros_like(V)
    hol = A > 0
    # u_zeta basis: (a / rho) s^(a-1) sbar^b
    pw = np.power.outer(s_nodes, np.arange(degree + 1))
    Vz[:, hol] = pw[:, A[hol] - 1] * np.conj(pw)[:, B[hol]] * (A[hol] / rho)

    # the 2-jet at the center in derivative units, so tiny discs still resolve u_zeta zetabar
    low = (A + B) <= 2
    jet_scale = rho ** -(A[low] + B[low]).astype(float)

    c = np.zeros((K, n), dtype=complex)
    c[0] = jet.center
    c[1] = jet.v * rho          # (a, b) = (1, 0) is index 1
    diffs, ratios = [], []
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        u = V @ c
        if not np.all(s.contains(u)):
            raise LeftDomainError("solution left structure domain")
        uz = Vz @ c
        F = np.conj(np.einsum("mrc,mc->mr", s.q_at(u), uz))
        c_new = rho * (M @ (P @ F))
        c_new[0] = jet.center
        c_new[1] = jet.v * rho
        d = max(float(np.max(np.abs(V @ (c_new - c)))),
                float(np.max(np.abs(c_new[low] - c[low]) * jet_scale[:, None])))
        c = c_new
        if diffs and diffs[-1] > 0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        if d <= 0.1 * tol:
            break
        if len(diffs) >= 4 and all(diffs[-k] >= diffs[-k - 1] for k in (1, 2, 3)):
            raise RadiusTooLargeError(
                f"radius too large: iterate distance stopped decreasing at iteration {it}")
    else:
        if diffs[-1] > 0.1 * tol:
            raise RadiusTooLargeError(f"radius too large: no convergence in {max_iter} iterations")

    poly = DiscPolynomial(c, rho, degree)
    zeta, mask, _ = disc_grid(grid_n, rho)
    u, uz, uzb, uzzb = poly.evaluate(zeta)
    if not np.all(s.contains(u[mask])):
        raise LeftDomainError("solution left structure domain")
    res = np.zeros_like(u)
    res[mask] = _e1_residual(s, u[mask], uz[mask], uzb[mask])
    sol = DiscSolution(jet, poly, zeta, mask, u, uz, uzb, uzzb, res, iterations, tuple(ratios), tol)
    if sol.residual_sup > tol:
        raise SolverError(f"residual {sol.residual_sup:.3g} exceeds tolerance {tol:.3g} "
                          f"(raise the degree or shrink the radius)")
    return sol


# ---------------------------------------------------------------------------
# second-order identities
# ---------------------------------------------------------------------------

def e3_source(s: StructureField, u, u_z, u_zb):
    """``S = [Q_z(u) . u_zetabar] u_zeta + [Q_zbar(u) . conj(u_zeta)] u_zeta``.

    Differentiating the disc equation gives ``conj(u_zeta zetabar) = S + Q(u) u_zeta zetabar``.
    """
    dz, dzb = s.dq_at(u)
    mat = (np.einsum("...rcj,...j->...rc", dz, u_zb)
           + np.einsum("...rcj,...j->...rc", dzb, np.conj(u_z)))
    return np.einsum("...rc,...c->...r", mat, u_z)


def center_two_jet(s: StructureField, p, v, tol=1e-15, max_iter=200):
    """``(u_zetabar(0), u_zeta zetabar(0))`` of any disc through ``p`` with ``u_zeta(0) = v``."""
    p = np.asarray(p, dtype=complex)
    v = np.asarray(v, dtype=complex)
    q = s.q_at(p)
    if np.any(operator_norm(q) >= ADMISSIBLE_NORM):
        raise AdmissibilityError("|Q| >= 1/2 at the center")
    u_zb = np.conj(np.einsum("...rc,...c->...r", q, v))
    S = e3_source(s, p, v, u_zb)
    w = np.conj(S)
    for _ in range(max_iter):
        w_new = np.conj(S + np.einsum("...rc,...c->...r", q, w))
        if np.max(np.abs(w_new - w)) <= tol * (1 + np.max(np.abs(w_new))):
            w = w_new
            break
        w = w_new
    return u_zb, w


@dataclass
class E3Report:
    lhs: np.ndarray
    rhs: np.ndarray
    worst_ratio: float
    holds: bool
    slack: float


def e3_bound_check(sol: DiscSolution, s: StructureField, slack: float = 1e-9) -> E3Report:
    """Check ``|u_zeta zetabar| <= 2 |S|`` pointwise on the solved disc."""
    m = sol.mask
    u = sol.u[m]
    if np.any(operator_norm(s.q_at(u)) >= ADMISSIBLE_NORM):
        raise AdmissibilityError("norm precondition |Q(u)| < 1/2 violated on the disc")
    S = e3_source(s, u, sol.u_z[m], sol.u_zb[m])
    lhs = np.linalg.norm(sol.u_zzb[m], axis=-1)
    rhs = 2 * np.linalg.norm(S, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > slack, np.inf, 0.0))
    return E3Report(lhs, rhs, float(np.max(ratio)), bool(np.all(lhs <= rhs + slack)), slack)


def exact_jet_disc(z1, z2):
    """The map ``zeta -> (z1 + zeta, z2 + conj(z2) conj(zeta))``, returned as a callable."""
    z1, z2 = complex(z1), complex(z2)

    def u(zeta):
        zeta = np.asarray(zeta, dtype=complex)
        return np.stack([z1 + zeta, z2 + np.conj(z2) * np.conj(zeta)], -1)

    u.u_z = lambda zeta: np.stack([np.ones_like(np.asarray(zeta, complex)),
                                   np.zeros_like(np.asarray(zeta, complex))], -1)
    u.u_zb = lambda zeta: np.stack([np.zeros_like(np.asarray(zeta, complex)),
                                    np.conj(z2) * np.ones_like(np.asarray(zeta, complex))], -1)
    return u


def map_residual(s: StructureField, u, zeta):
    """Residual ``conj(u_zetabar) - Q(u) u_zeta`` of a map carrying ``u_z``/``u_zb`` callables."""
    return _e1_residual(s, u(zeta), u.u_z(zeta), u.u_zb(zeta))
