"""Grid experiments on measures in the plane near the origin.

* the ``1/|z|`` potential of a positive measure and the sets
  ``E_eps = {(1/|z|) * nu <= eps/|z|}``, glued into a fat witness;
* the principal-value ``-1/(pi z^2)`` transform and its weak-L1 level sets;
* divergence of ``int rho`` over sets of positive density when
  ``rho >= 1/(|z|^2 |log|z||)``;
* the density ``1/(|z|^2 sqrt|log|z||)`` on sparse dyadic annuli.

Grids are cell-centred: cell ``(i, j)`` has centre ``-R + (j + 1/2) h + i(-R + (i + 1/2) h)``
with ``h = 2R/N``; arrays are indexed ``[iy, ix]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from .errors import DomainError

SELF_CELL = 4.0 * np.log1p(np.sqrt(2.0))   # int over the unit square centred at 0 of 1/|z|


@dataclass(frozen=True)
class GridMeasure:
    """Cell values on ``[-R, R]^2``: masses (``mode="measure"``) or densities (``mode="density"``).

    A point mass at the origin is kept separately in ``origin_atom``.
    """

    R: float
    values: np.ndarray = field(repr=False)
    mode: str = "measure"
    origin_atom: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be a square grid")
        if self.mode not in ("measure", "density"):
            raise ValueError("mode must be 'measure' or 'density'")
        if self.mode == "measure" and (np.any(v.real < 0) or np.iscomplexobj(v)):
            raise ValueError("measure mode needs nonnegative real masses")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.N

    @property
    def has_atom(self) -> bool:
        return self.origin_atom > 0

    def centers(self):
        return grid_centers(self.R, self.N)

    def masses(self):
        return self.values if self.mode == "measure" else self.values * self.h ** 2

    @property
    def total_mass(self) -> float:
        return float(np.sum(np.abs(self.masses()))) + self.origin_atom

    @classmethod
    def from_density(cls, f: Callable, R, N, mode="measure"):
        """Cell values from a density ``f(z)`` sampled at cell centres."""
        z = grid_centers(R, N)
        d = np.asarray(f(z))
        if mode == "measure":
            return cls(R, np.asarray(d, float) * (2.0 * R / N) ** 2, "measure")
        return cls(R, d, "density")


def grid_centers(R, N):
    h = 2.0 * R / N
    c = -R + (np.arange(N) + 0.5) * h
    return c[None, :] + 1j * c[:, None]


# ---------------------------------------------------------------------------
# builtin measures
# ---------------------------------------------------------------------------

def uniform_disc(R=1.0, N=512, radius=1.0, mass=1.0) -> GridMeasure:
    z = grid_centers(R, N)
    inside = (np.abs(z) <= radius).astype(float)
    return GridMeasure(R, inside * mass / inside.sum())


def circle_measure(radius=1e-2, R=None, N=512, mass=1.0, n_points=4096) -> GridMeasure:
    """Uniform measure on ``|z| = radius`` binned into cells."""
    R = 2 * radius if R is None else R
    th = 2 * np.pi * (np.arange(n_points) + 0.5) / n_points
    pts = radius * np.exp(1j * th)
    h = 2.0 * R / N
    ix = np.floor((pts.real + R) / h).astype(int)
    iy = np.floor((pts.imag + R) / h).astype(int)
    vals = np.zeros((N, N))
    np.add.at(vals, (iy, ix), mass / n_points)
    return GridMeasure(R, vals)


def gaussian_bump(R=1.0, N=512, center=0.0, sigma=None, mass=1.0, mode="measure") -> GridMeasure:
    h = 2.0 * R / N
    sigma = 1.5 * h if sigma is None else sigma
    z = grid_centers(R, N)
    g = np.exp(-np.abs(z - center) ** 2 / (2 * sigma * sigma))
    g *= mass / (g.sum() * (h * h if mode == "density" else 1.0))
    return GridMeasure(R, g, mode)


def point_mass(z0, R=2.0, N=64, mass=1.0) -> GridMeasure:
    """Unit mass placed at the cell containing ``z0``, or as an origin atom when ``z0 = 0``."""
    vals = np.zeros((N, N))
    if z0 == 0:
        return GridMeasure(R, vals, origin_atom=mass)
    h = 2.0 * R / N
    ix = int(np.floor((np.real(z0) + R) / h))
    iy = int(np.floor((np.imag(z0) + R) / h))
    vals[iy, ix] = mass
    return GridMeasure(R, vals)


BUILTIN_MEASURES = {
    "uniform-disc": lambda N=2048: uniform_disc(1.0, N),
    "circle-1e-2": lambda N=2048: circle_measure(1e-2, 2e-2, N),
    "offset-bump": lambda N=2048: gaussian_bump(1.0, N, center=0.3 + 0.2j, sigma=0.05),
}


# ---------------------------------------------------------------------------
# 1/|z| potentials
# ---------------------------------------------------------------------------

def _offsets(N, h):
    k = np.arange(-(N - 1), N) * h
    return k[None, :] + 1j * k[:, None]


def conv_inv_abs(nu: GridMeasure) -> np.ndarray:
    """``((1/|z|) * nu)`` at every cell centre.

    Off-diagonal cells use the midpoint rule; a cell's own mass is spread
    uniformly and integrated exactly.
    """
    N, h = nu.N, nu.h
    d = np.abs(_offsets(N, h))
    d[N - 1, N - 1] = 1.0
    ker = 1.0 / d
    ker[N - 1, N - 1] = SELF_CELL / h
    out = fftconvolve(nu.masses(), ker, mode="same")
    if nu.origin_atom:
        out = out + nu.origin_atom / np.abs(nu.centers())
    return out


def _cell_integral_inv_abs(dx, dy, h):
    """``int 1/|w|`` over the cell ``[dx - h/2, dx + h/2] x [dy - h/2, dy + h/2]``."""

    def F(x, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(x != 0, x * np.arcsinh(y / np.where(x != 0, x, 1)), 0.0)
            b = np.where(y != 0, y * np.arcsinh(x / np.where(y != 0, y, 1)), 0.0)
        return a + b

    x0, x1 = dx - h / 2, dx + h / 2
    y0, y1 = dy - h / 2, dy + h / 2
    return F(x1, y1) - F(x0, y1) - F(x1, y0) + F(x0, y0)


def conv_inv_abs_at(nu: GridMeasure, points, near=2) -> np.ndarray:
    """``((1/|z|) * nu)`` at arbitrary points by direct summation.

    Cells within ``near`` cells of the point are integrated exactly with
    the mass spread uniformly over the cell.
    """
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    z = nu.centers().ravel()
    m = nu.masses().ravel()
    h = nu.h
    out = np.empty(points.shape)
    for idx, p in np.ndenumerate(points):
        d = p - z
        close = (np.abs(d.real) <= (near + 0.5) * h) & (np.abs(d.imag) <= (near + 0.5) * h)
        far = ~close
        val = np.sum(m[far] / np.abs(d[far]))
        val += np.sum(m[close] * _cell_integral_inv_abs(d[close].real, d[close].imag, h)) / h ** 2
        if nu.origin_atom:
            val += nu.origin_atom / abs(p)
        out[idx] = val
    return out


def far_field_part(nu: GridMeasure, points) -> np.ndarray:
    """``int_{|z - t| >= 2|z|} |z - t|^{-1} d nu(t)`` at the given points."""
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    z = nu.centers().ravel()
    m = nu.masses().ravel()
    out = np.empty(points.shape)
    for idx, p in np.ndenumerate(points):
        d = np.abs(p - z)
        sel = d >= 2 * abs(p)
        out[idx] = np.sum(m[sel] / d[sel])
    return out


# ---------------------------------------------------------------------------
# densities and fat sets
# ---------------------------------------------------------------------------

def density_profile(mask, R, radii, min_cells=4.0) -> np.ndarray:
    """``|E cap {|z| < r}| / (pi r^2)`` for a cell mask, with a linear ramp on boundary cells."""
    mask = np.asarray(mask, dtype=float)
    N = mask.shape[0]
    h = 2.0 * R / N
    d = np.abs(grid_centers(R, N))
    radii = np.atleast_1d(np.asarray(radii, float))
    if np.any(radii < min_cells * h):
        raise DomainError(f"radius below {min_cells:g} cells is not resolvable")
    if np.any(radii > R):
        raise DomainError("radius exceeds the grid")
    out = np.empty(radii.shape)
    for k, r in enumerate(radii):
        w = np.clip((r - d) / h + 0.5, 0.0, 1.0)
        out[k] = np.sum(mask * w) * h * h / (np.pi * r * r)
    return out


def dyadic_radii(R, N, min_cells=16.0):
    """Radii ``R 2^-k`` that are at least ``min_cells`` cells wide, largest first."""
    h = 2.0 * R / N
    out = []
    r = R / 2
    while r >= min_cells * h:
        out.append(r)
        r /= 2
    return np.array(out)


@dataclass
class FatSet:
    mask: np.ndarray = field(repr=False)
    R: float
    radii: np.ndarray
    density: np.ndarray
    annulus_sup: np.ndarray
    is_fat: bool


def fatness(mask, R, radii=None, threshold=0.99, count=3, min_cells=16.0):
    """Density table at dyadic radii and the verdict on the ``count`` smallest."""
    N = np.asarray(mask).shape[0]
    radii = dyadic_radii(R, N, min_cells) if radii is None else np.asarray(radii)
    dens = density_profile(mask, R, radii)
    small = np.argsort(radii)[:count]
    return radii, dens, bool(np.all(dens[small] >= threshold))


def eps_set(nu: GridMeasure, eps, potential=None):
    """Cells of ``E_eps = {(1/|z|) * nu <= eps / |z|}``."""
    pot = conv_inv_abs(nu) if potential is None else potential
    return pot * np.abs(nu.centers()) <= eps


def build_fat_witness(nu: GridMeasure, radii=None, eps=None, min_cells=16.0) -> FatSet:
    """Glue ``E_{eps_j}`` on the annuli ``r_{j+1} < |z| <= r_j``.

    Defaults: ``r_j = R 2^-j`` and ``eps_j = 1/j``.  Outside ``r_1`` the set
    ``E_{eps_1}`` is used, inside the last radius ``E_{eps_last}``.
    """
    if nu.has_atom:
        raise ValueError("measure has an atom at the origin; no fat witness exists")
    if nu.mode != "measure":
        raise ValueError("fat witness needs a positive measure")
    if radii is None:
        radii = nu.R * 2.0 ** -np.arange(1, 64)
        radii = radii[radii >= nu.h]
    radii = np.asarray(radii, float)
    if np.any(radii[1:] > radii[:-1] / 2 * (1 + 1e-12)):
        raise ValueError("radii must satisfy r_{j+1} <= r_j / 2")
    eps = 1.0 / np.arange(1, radii.size + 1) if eps is None else np.asarray(eps, float)
    pot = conv_inv_abs(nu)
    zabs = np.abs(nu.centers())
    scaled = pot * zabs
    mask = scaled <= eps[0]
    sups = np.zeros(radii.size)
    for j in range(radii.size):
        lo = radii[j + 1] if j + 1 < radii.size else 0.0
        shell = (zabs > lo) & (zabs <= radii[j])
        sel = shell & (scaled <= eps[j])
        mask = np.where(shell, sel, mask)
        sups[j] = float(np.max(scaled[sel])) if np.any(sel) else 0.0
    dr, dens, fat = fatness(mask, nu.R, min_cells=min_cells)
    return FatSet(mask, nu.R, dr, dens, sups, fat)


# ---------------------------------------------------------------------------
# the principal-value 1/z^2 transform
# ---------------------------------------------------------------------------

def pv_conv_z2(psi: GridMeasure) -> np.ndarray:
    """``psi * (-1/(pi z^2))`` at cell centres; the singular cell contributes 0."""
    N, h = psi.N, psi.h
    d = _offsets(N, h)
    d[N - 1, N - 1] = 1.0
    ker = -h * h / (np.pi * d * d)
    ker[N - 1, N - 1] = 0.0
    dens = psi.values if psi.mode == "density" else psi.values / h ** 2
    if np.iscomplexobj(dens):
        return fftconvolve(dens, ker, mode="same")
    return fftconvolve(dens, ker.real, mode="same") + 1j * fftconvolve(dens, ker.imag, mode="same")


def pv_conv_z2_at(psi: GridMeasure, points) -> np.ndarray:
    """Direct-sum counterpart of :func:`pv_conv_z2` at points away from cell centres."""
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    z = psi.centers().ravel()
    m = psi.masses().ravel()
    out = np.empty(points.shape, dtype=complex)
    for idx, p in np.ndenumerate(points):
        d = p - z
        ok = np.abs(d) > 1e-300
        out[idx] = -np.sum(m[ok] / (np.pi * d[ok] ** 2))
    return out


@dataclass
class WeakL1Table:
    t: np.ndarray
    measure: np.ndarray
    product: np.ndarray
    norm: float
    C_emp: float


def weak_l1_table(psi: GridMeasure, t=None, result=None) -> WeakL1Table:
    """``m(t) = |{|T psi| > t}|`` by cell counting, with ``m(t) t / |psi|_1``."""
    res = pv_conv_z2(psi) if result is None else result
    t = np.geomspace(1.0, 1e4, 17) if t is None else np.asarray(t, float)
    a = np.sort(np.abs(res).ravel())
    counts = a.size - np.searchsorted(a, t, side="right")
    m = counts * psi.h ** 2
    norm = psi.total_mass
    prod = m * t
    return WeakL1Table(t, m, prod, norm, float(np.max(prod) / norm) if norm > 0 else 0.0)


def dyadic_level_constants(psi: GridMeasure, ks=range(4, 11), result=None) -> dict:
    """``C_k = |{|T psi| > 4^k} cap {2^-k-1 <= |z| <= 2^-k}| 4^k / |psi|_1`` per shell."""
    res = pv_conv_z2(psi) if result is None else result
    zabs = np.abs(psi.centers())
    norm = psi.total_mass
    out = {}
    for k in ks:
        shell = (zabs >= 2.0 ** (-k - 1)) & (zabs <= 2.0 ** -k)
        area = np.sum(shell & (np.abs(res) > 4.0 ** k)) * psi.h ** 2
        out[int(k)] = float(area * 4.0 ** k / norm)
    return out


# ---------------------------------------------------------------------------
# divergence over sets of positive density
# ---------------------------------------------------------------------------

def polar_integral(rho: Callable, r0, r1, F: Optional[Callable] = None, n_s=64, n_t=256):
    """``int_{r0 < |z| < r1} rho 1_F dA`` with Gauss nodes in ``s = log r`` and equispaced angles.

    ``rho`` and ``F`` take complex points; ``F`` returns booleans.
    """
    x, w = np.polynomial.legendre.leggauss(n_s)
    a, b = np.log(r0), np.log(r1)
    s = 0.5 * (b - a) * (x + 1) + a
    ws = 0.5 * (b - a) * w
    th = 2 * np.pi * (np.arange(n_t) + 0.5) / n_t
    r = np.exp(s)
    z = r[:, None] * np.exp(1j * th)[None, :]
    vals = np.asarray(rho(z), float)
    if F is not None:
        vals = vals * np.asarray(F(z), float)
    return float(np.sum(ws * r * r * vals.mean(axis=1)) * 2 * np.pi)


def rho_loglog(z):
    r = np.abs(z)
    return 1.0 / (r * r * np.abs(np.log(r)))


@dataclass
class A3Table:
    delta: float
    eta: float
    k: np.ndarray
    integrals: np.ndarray
    lower_bounds: np.ndarray
    partial_sums: np.ndarray
    bound_sums: np.ndarray
    truncated_at: Optional[int]


def lemma_a3_divergence(rho: Callable = rho_loglog, delta=1.0, F: Optional[Callable] = None,
                        K=64, n_s=64, n_t=256) -> A3Table:
    """Annulus integrals over ``eta^{k+1} < |z| < eta^k`` with ``eta = sqrt(delta / 2 pi)``.

    The table stops at the first ``k`` where the measured density of ``F`` in
    ``{|z| < eta^k}`` is not above ``delta``.
    """
    if not (0 < delta < 2 * np.pi):
        raise ValueError("invalid delta: need 0 < delta < 2 pi")
    eta = float(np.sqrt(delta / (2 * np.pi)))
    ks, ints, lbs = [], [], []
    truncated = None
    one = lambda z: np.ones(np.shape(z))
    for k in range(1, K + 1):
        r_hi, r_lo = eta ** k, eta ** (k + 1)
        if r_lo <= 1e-300:
            truncated = k
            break
        if F is not None:
            area = polar_integral(one, r_hi * 1e-12, r_hi, F, n_s, n_t)
            if area <= delta * r_hi ** 2:
                truncated = k
                break
        ks.append(k)
        ints.append(polar_integral(rho, r_lo, r_hi, F, n_s, n_t))
        lbs.append(delta / (2 * abs(np.log(eta)) * k))
    ints, lbs = np.array(ints), np.array(lbs)
    return A3Table(delta, eta, np.array(ks), ints, lbs, np.cumsum(ints), np.cumsum(lbs), truncated)


# ---------------------------------------------------------------------------
# sparse annuli
# ---------------------------------------------------------------------------

LOG2 = np.log(2.0)


def remark1_rho(n_seq):
    """``1/(|z|^2 sqrt|log|z||)`` on ``2^{-n-1} < |z| < 2^{-n}`` for ``n`` in ``n_seq``; 0 elsewhere."""
    n_seq = np.asarray(list(n_seq), dtype=float)

    def rho(z):
        r = np.abs(z)
        on = np.zeros(r.shape, bool)
        for n in n_seq:
            on |= (r > 2.0 ** (-n - 1)) & (r < 2.0 ** -n)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(on, 1.0 / (r * r * np.sqrt(np.abs(np.log(r)))), 0.0)

    return rho


def annulus_mass_closed(n):
    n = np.asarray(n, float)
    return 4 * np.pi * (np.sqrt((n + 1) * LOG2) - np.sqrt(n * LOG2))


def annulus_mass_quad(n):
    """Radial quadrature in ``s = -log r`` of the mass on one annulus."""
    f = lambda s: 2 * np.pi / np.sqrt(s)
    return integrate.quad(f, n * LOG2, (n + 1) * LOG2, epsabs=0, epsrel=1e-12)[0]


@dataclass
class Remark1Report:
    n: np.ndarray
    mass_closed: np.ndarray
    mass_quad: np.ndarray
    sup_closed: np.ndarray
    sup_scan: np.ndarray
    partial_sums: np.ndarray
    tail_bound: np.ndarray
    avoid_density: np.ndarray
    grid: Optional[GridMeasure] = field(default=None, repr=False)

    @property
    def l1_norm(self) -> float:
        return float(self.mass_closed.sum())


def remark1_density(n_seq: Sequence[int], R=None, N=0, n_scan=2001) -> Remark1Report:
    """Per-annulus masses, tail bounds and the sup of ``|z|^2 |log|z|| rho`` on each annulus.

    ``avoid_density`` is the largest density at ``r = 2^-n_j`` of a set missing
    the annulus: ``1/4``, since the annulus fills three quarters of that disc.
    With ``N > 0`` a density grid on ``[-R, R]^2`` is also returned.
    """
    n = np.asarray(list(n_seq), dtype=int)
    if n.size and np.any(np.diff(n) <= 0):
        raise ValueError("n_j must be strictly increasing")
    if n.size and n[0] < 1:
        raise ValueError("n_j must be positive")
    mc = annulus_mass_closed(n)
    mq = np.array([annulus_mass_quad(k) for k in n])
    sup_closed = np.sqrt((n + 1) * LOG2)
    sup_scan = np.empty(n.size)
    rho = remark1_rho(n)
    for j, k in enumerate(n):
        # open annulus: scan interior radii in s = -log r
        s = np.linspace(k * LOG2, (k + 1) * LOG2, n_scan)[1:-1]
        if 2 * s[-1] < 700:
            r = np.exp(-s)
            sup_scan[j] = np.max(r * r * s * rho(r + 0j))
        else:
            # r^2 underflows; r^2 rho = 1/sqrt(s) there
            sup_scan[j] = np.max(s / np.sqrt(s))
    inv = 1.0 / np.sqrt(n.astype(float)) if n.size else np.zeros(0)
    tail = 2 * np.pi * np.sqrt(LOG2) * (inv.sum() - np.cumsum(inv)) if n.size else np.zeros(0)
    grid = None
    if N > 0:
        R = 2.0 ** -float(n[0]) if R is None else R
        grid = GridMeasure.from_density(remark1_rho(n), R, N, mode="density")
    return Remark1Report(n, mc, mq, sup_closed, sup_scan, np.cumsum(mc), tail,
                         np.full(n.size, 0.25), grid)
