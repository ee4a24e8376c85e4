"""The t-attack against candidates with a logarithmic pole along ``z2 = 0``.

For the example structure (``Q = [[0, 0], [z2, 0]]``) and a disc with
``u(0) = (z1, z2)``, ``u1_zeta(0) = 1`` and ``u2_zeta(0) = t``, the Laplacian of
``lambda o u`` at 0 splits as ``A + B + C1 + C2`` with

    A  = 2 Re[(lambda_{zbar1 z2} + lambda_{z2 z2} conj(z2)) t]
    B  = lambda_{z2 zbar2} (|t|^2 + |z2|^2)
    C1 = 2 Re[lambda_{z1 z2} conj(z2) + lambda_{z2} z2]
    C2 = lambda_{z1 zbar1}

``A`` is linear in ``t``; aligning ``arg t`` against its coefficient with
``|t| = K2 |z2| |log|z2||`` drives the total to ``-infinity`` for ``log|z2|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import candidates as cands
from .errors import AlmostCxError, DomainError


@dataclass(frozen=True)
class E4Breakdown:
    A: float
    B: float
    C1: float
    C2: float
    z1: complex
    z2: complex
    t: complex
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.A + self.B + self.C1 + self.C2)


def e4_coefficients(lam: cands.CandidateFunction, z1, z2):
    """``(c, b, C1, C2)`` with ``A = 2 Re(c t)`` and ``B = b (|t|^2 + |z2|^2)``; batched over z2."""
    z2 = np.asarray(z2, dtype=complex)
    if np.any(z2 == 0):
        raise DomainError("z2 must be nonzero")
    pts = np.stack([np.broadcast_to(np.asarray(z1, dtype=complex), z2.shape), z2], -1)
    d = lam.derivatives(pts)
    c = d.mixed[..., 1, 0] + d.holo[..., 1, 1] * np.conj(z2)
    b = d.mixed[..., 1, 1].real
    C1 = 2 * np.real(d.holo[..., 0, 1] * np.conj(z2) + d.dz[..., 1] * z2)
    C2 = d.mixed[..., 0, 0].real
    return c, b, C1, C2


def e4_terms(lam: cands.CandidateFunction, z1, z2, t) -> E4Breakdown:
    """``A, B, C1, C2`` at ``(z1, z2)`` for the jet ``u_zeta(0) = (1, t)``."""
    z1, z2, t = complex(z1), complex(z2), complex(t)
    c, b, C1, C2 = (np.asarray(x).item() for x in e4_coefficients(lam, z1, np.array(z2)))
    A = 2 * float(np.real(c * t))
    B = float(b) * (abs(t) ** 2 + abs(z2) ** 2)
    return E4Breakdown(A, B, float(C1), float(C2), z1, z2, t)


# ---------------------------------------------------------------------------
# the attack
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackSpec:
    """``|t| = K2 |z2| |log|z2||``; radii log-spaced from ``r_max`` down to ``r_min``."""

    K2: float = 8.0
    n_angles: int = 64
    r_max: float = 1e-2
    r_min: float = 1e-8
    per_decade: int = 1
    z1: complex = 0.0
    mask: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_angles < 8:
            raise ValueError("angle grid must place a point in every interval of length pi/4")
        if not (0 < self.r_min < self.r_max < 1):
            raise ValueError("need 0 < r_min < r_max < 1")

    def radii(self):
        decades = np.log10(self.r_max / self.r_min)
        count = int(round(decades * self.per_decade)) + 1
        return np.geomspace(self.r_max, self.r_min, count)

    def angles(self):
        return 2 * np.pi * np.arange(self.n_angles) / self.n_angles


ATTACK_COLUMNS = ("abs_z2", "theta", "arg_t", "A", "B", "C1", "C2", "total", "threshold", "verdict")


@dataclass
class AttackRow:
    abs_z2: float
    theta: float
    arg_t: float
    A: float
    B: float
    C1: float
    C2: float
    total: float
    threshold: float
    verdict: str

    def as_dict(self):
        return {k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


@dataclass
class AttackReport:
    spec: AttackSpec
    rows: list

    @property
    def success(self) -> bool:
        return any(r.verdict == "success" for r in self.rows)

    @property
    def all_success(self) -> bool:
        live = [r for r in self.rows if r.verdict in ("success", "no-success")]
        return bool(live) and all(r.verdict == "success" for r in live)


def attack_t(c, r, K2):
    """``t`` of modulus ``K2 r |log r|`` with ``Re(c t)`` as negative as possible."""
    mod = K2 * r * abs(np.log(r))
    c = np.asarray(c, dtype=complex)
    ac = np.abs(c)
    with np.errstate(invalid="ignore", divide="ignore"):
        phase = np.where(ac > 0, -np.conj(c) / np.where(ac > 0, ac, 1.0), 1.0)
    return mod * phase


def run_attack(lam: cands.CandidateFunction, spec: AttackSpec = AttackSpec()) -> AttackReport:
    """Best (most negative) ``A + B + C1 + C2`` per radius over the angle grid."""
    rows = []
    th = spec.angles()
    for r in spec.radii():
        thr = -(spec.K2 / 8) * abs(np.log(r)) + 1
        z2 = r * np.exp(1j * th)
        keep = np.ones(th.size, bool) if spec.mask is None else np.asarray(spec.mask(z2), bool)
        if not np.any(keep):
            rows.append(AttackRow(r, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, thr, "masked"))
            continue
        try:
            c, b, C1, C2 = e4_coefficients(lam, spec.z1, z2[keep])
        except (AlmostCxError, ValueError, FloatingPointError) as exc:
            rows.append(AttackRow(r, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, thr,
                                  f"error: {exc}"))
            continue
        t = attack_t(c, r, spec.K2)
        A = 2 * np.real(c * t)
        B = b * (np.abs(t) ** 2 + r * r)
        total = A + B + C1 + C2
        k = int(np.argmin(total))
        rows.append(AttackRow(r, float(th[keep][k]), float(np.angle(t[k])), float(A[k]), float(B[k]),
                              float(C1[k]), float(C2[k]), float(total[k]), float(thr),
                              "success" if total[k] <= thr else "no-success"))
    return AttackReport(spec, rows)


# ---------------------------------------------------------------------------
# Lelong decomposition and the decay hypotheses
# ---------------------------------------------------------------------------

def circle_means(lam: cands.CandidateFunction, z1, radii, n_angles=64):
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    radii = np.asarray(radii, dtype=float)
    z2 = radii[:, None] * np.exp(1j * th)[None, :]
    pts = np.stack([np.full(z2.shape, complex(z1)), z2], -1)
    return np.mean(lam(pts), axis=1)


@dataclass
class LelongDecomposition:
    a: float
    mu: cands.CandidateFunction
    radii: np.ndarray
    means: np.ndarray
    fit_residual: float


def lelong_fit(lam: cands.CandidateFunction, z1=0.0, radii=None, n_angles=64,
               mono_tol=1e-12) -> LelongDecomposition:
    """Slope of circle means of ``lambda(z1, .)`` against ``log r``; ``mu = lambda - a log|z2|``."""
    radii = np.geomspace(1e-8, 1e-2, 25) if radii is None else np.sort(np.asarray(radii, float))
    means = circle_means(lam, z1, radii, n_angles)
    if np.any(np.diff(means) < -mono_tol * (1 + np.abs(means[1:]))):
        raise ValueError("not subharmonic in z2: circle means decrease with the radius")
    x = np.log(radii)
    coef, res, *_ = np.polyfit(x, means, 1, full=True)
    a = float(coef[0])
    base = lam.jet_func

    def mu(zs):
        return base(zs) - a * 0.5 * (zs[1] * zs[1].conj()).real().log()

    mu_c = cands.CandidateFunction(f"{lam.name} - {a:g} log|z2|", lam.n, mu, lam.guard, lam.singular_locus)
    return LelongDecomposition(a, mu_c, radii, means,
                               float(np.sqrt(res[0] / radii.size)) if res.size else 0.0)


@dataclass
class HReport:
    decades: np.ndarray
    sup_second: np.ndarray
    sup_first: np.ndarray
    hplus_ratio: Optional[np.ndarray]
    verdict: str


def _monotone_to_zero(vals, tol, rtol=1e-9):
    dec = np.all(np.diff(vals) <= rtol * (1 + np.abs(vals[:-1])))
    return bool(dec and vals[-1] < tol)


def check_H(mu: cands.CandidateFunction, z1=0.0, r_max=1e-2, r_min=1e-8, per_decade=3,
            n_angles=64, lam: Optional[cands.CandidateFunction] = None, tol=0.1) -> HReport:
    """Decade table of ``sup |z2^2 mu_{z2 z2}|`` and ``sup |z2 mu_{z2}|`` as ``z2 -> 0``.

    With ``lam`` given, also ``sup |lambda_{z1 zbar1}| / |log|z2||`` per decade.
    The verdict is ``H-satisfied`` when both columns decrease monotonically and
    end below ``tol``.
    """
    n_dec = int(round(np.log10(r_max / r_min)))
    tops = r_max * 10.0 ** -np.arange(n_dec)
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    s2, s1, hp = [], [], []
    for top in tops:
        r = np.geomspace(top, top / 10, per_decade, endpoint=False)
        z2 = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
        pts = np.stack([np.full(z2.shape, complex(z1)), z2], -1)
        d = mu.derivatives(pts)
        s2.append(float(np.max(np.abs(z2 ** 2 * d.holo[..., 1, 1]))))
        s1.append(float(np.max(np.abs(z2 * d.dz[..., 1]))))
        if lam is not None:
            dl = lam.derivatives(pts)
            hp.append(float(np.max(np.abs(dl.mixed[..., 0, 0]) / np.abs(np.log(np.abs(z2))))))
    s2, s1 = np.array(s2), np.array(s1)
    ok = _monotone_to_zero(s2, tol) and _monotone_to_zero(s1, tol)
    return HReport(tops, s2, s1, np.array(hp) if lam is not None else None,
                   "H-satisfied" if ok else "H-violated")


# ---------------------------------------------------------------------------
# smoothing in z1
# ---------------------------------------------------------------------------

def bump(r, width):
    """Radial bump ``exp(-1 / (1 - (r/width)^2))`` supported on ``r < width`` (unnormalized)."""
    x = np.asarray(r, float) / width
    out = np.zeros_like(x)
    inside = x < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def bump_nodes(width, n_r=24, n_t=16):
    """Shifts and weights (summing to 1) of a polar quadrature for the bump."""
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * width * (x + 1)
    wr = 0.5 * width * w * r * bump(r, width)
    th = 2 * np.pi * np.arange(n_t) / n_t
    shifts = (r[:, None] * np.exp(1j * th)[None, :]).ravel()
    weights = np.repeat(wr, n_t) / n_t
    return shifts, weights / weights.sum()


def bump_second_moment(width):
    """``int |w|^2 phi / int phi`` for the normalized bump, by adaptive quadrature."""
    num = integrate.quad(lambda r: r ** 3 * bump(np.array([r]), width)[0], 0, width, epsabs=0, epsrel=1e-13)[0]
    den = integrate.quad(lambda r: r * bump(np.array([r]), width)[0], 0, width, epsabs=0, epsrel=1e-13)[0]
    return num / den


def smooth_in_z1(lam: cands.CandidateFunction, width, z1_halfwidth=None, n_r=24,
                 n_t=16) -> cands.CandidateFunction:
    """``lambda`` convolved in ``z1`` with the unit-mass bump of radius ``width``.

    ``z1_halfwidth`` declares the slab on which ``lambda`` is defined; the
    kernel must fit inside it.
    """
    if width <= 0:
        raise ValueError("kernel width must be positive")
    if z1_halfwidth is not None and width >= z1_halfwidth:
        raise DomainError("domain too narrow for the smoothing kernel")
    shifts, weights = bump_nodes(width, n_r, n_t)
    base = lam.jet_func

    def f(zs):
        total = None
        for c, w in zip(shifts, weights):
            term = base([zs[0] - c] + list(zs[1:])) * w
            total = term if total is None else total + term
        return total

    g = lam.guard

    def shifted_guard(points):
        bad = np.zeros(points.shape[:-1], bool)
        for c in shifts:
            p = points.copy()
            p[..., 0] -= c
            bad |= np.asarray(g(p), bool)
        return bad

    return cands.CandidateFunction(f"smooth({lam.name}, {width:g})", lam.n, f,
                                   shifted_guard if g is not None else None, lam.singular_locus)


__all__ = ["E4Breakdown", "e4_terms", "e4_coefficients", "AttackSpec", "AttackReport", "run_attack",
           "attack_t", "LelongDecomposition", "lelong_fit", "circle_means", "HReport", "check_H",
           "smooth_in_z1", "bump", "bump_nodes", "bump_second_moment", "ATTACK_COLUMNS"]
