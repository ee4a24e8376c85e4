"""Laplacians of candidate functions along pseudoholomorphic discs.

For a disc ``u`` and a real function ``lambda``,

    d^2(lambda o u)/dzeta dzetabar = I + II + III

with ``I`` the Levi-form part, ``II = 2 Re sum lambda_jk u_j,zeta u_k,zetabar``
and ``III = 2 Re sum lambda_j u_j,zeta zetabar``.  The helpers below evaluate
these terms, the one-variable model identities, the Hessian bound for
``-log|log|Z'||`` and the polynomial inequality chain that makes
``-log|log|Z'|| + K|z_1|^2`` plurisubharmonic near the axis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from . import candidates as cands
from .disc import DiscSolution, JetSpec, solve_disc
from .errors import (AlmostCxError, DomainError, NormalizationError, SingularLocusError,
                     SolverError)
from .structure import StructureField
from .wirtinger import fd_laplacian_quarter

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# term bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TermBreakdown:
    """Named summands and their total (summed once at construction)."""

    terms: dict
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", float(sum(self.terms.values())))

    def __getitem__(self, key):
        return self.terms[key]

    @property
    def labels(self):
        return tuple(self.terms)


# ---------------------------------------------------------------------------
# one-variable models
# ---------------------------------------------------------------------------

def model_laplacians(z) -> dict:
    """``d2/dz dzbar`` of ``-log|log|z||`` and of ``|z|`` in closed form."""
    r = abs(complex(z))
    if r == 0 or r >= 1:
        raise DomainError("model Laplacians need 0 < |z| < 1")
    return {"loglog": 1.0 / (4 * r * r * np.log(r) ** 2), "abs": 1.0 / (4 * r)}


def model_laplacians_fd(z, rel_step=1e-2) -> dict:
    """Finite-difference counterpart of :func:`model_laplacians` (fourth-order stencil)."""
    z = complex(z)
    r = abs(z)
    if r == 0 or r >= 1:
        raise DomainError("model Laplacians need 0 < |z| < 1")
    h = rel_step * r
    ll = fd_laplacian_quarter(lambda w: -np.log(abs(np.log(abs(w)))), z, h)
    ab = fd_laplacian_quarter(abs, z, h)
    return {"loglog": ll, "abs": ab}


@dataclass(frozen=True)
class PerturbedOperator:
    """``d2/dz dzbar + a1 d2/dz2 + a2 d2/dz dzbar + a3 d2/dzbar2 + b1 d/dz + b2 d/dzbar`` on ``C``.

    Coefficients are callables of ``z``.  ``a3`` and ``b2`` default to the
    conjugates of ``a1`` and ``b1`` so that the operator maps real functions
    to real functions.
    """

    a1: Callable
    a2: Callable
    b1: Callable
    a3: Optional[Callable] = None
    b2: Optional[Callable] = None

    def coefficients(self, z):
        z = np.asarray(z, dtype=complex)
        a1 = np.asarray(self.a1(z), dtype=complex) * np.ones_like(z)
        a2 = np.asarray(self.a2(z), dtype=complex) * np.ones_like(z)
        b1 = np.asarray(self.b1(z), dtype=complex) * np.ones_like(z)
        a3 = np.conj(a1) if self.a3 is None else np.asarray(self.a3(z), dtype=complex) * np.ones_like(z)
        b2 = np.conj(b1) if self.b2 is None else np.asarray(self.b2(z), dtype=complex) * np.ones_like(z)
        return a1, a2, a3, b1, b2

    def check_vanishing(self, tol=1e-14):
        a1, a2, a3, _, _ = self.coefficients(np.zeros(1))
        return bool(max(abs(a1[0]), abs(a2[0]), abs(a3[0])) <= tol)


def perturbed_apply(op: PerturbedOperator, f: cands.CandidateFunction, z, imag_tol=1e-9):
    """Apply ``op`` to a one-variable candidate at ``z`` (scalar or array)."""
    z = np.asarray(z, dtype=complex)
    d = f.derivatives(z[..., None])
    a1, a2, a3, b1, b2 = op.coefficients(z)
    fzz = d.holo[..., 0, 0]
    parts = ((1 + a2) * d.mixed[..., 0, 0], a1 * fzz, a3 * np.conj(fzz),
             b1 * d.dz[..., 0], b2 * d.dzb[..., 0])
    out = sum(parts)
    # roundoff scales with the raw derivatives, not with their (possibly cancelled) sum
    scale = (1 + sum(np.abs(x) for x in parts) + np.abs(fzz) + np.abs(d.mixed[..., 0, 0])
             + np.abs(d.dz[..., 0]))
    if np.any(np.abs(out.imag) > imag_tol * scale):
        raise ValueError("operator does not preserve real functions (a3 != conj a1 or b2 != conj b1)")
    return out.real


def _polar_grid(r_max, r_min=1e-8, n_r=200, n_t=64):
    r = np.geomspace(r_min, r_max, n_r)
    t = 2 * np.pi * np.arange(n_t) / n_t
    return r, r[:, None] * np.exp(1j * t)[None, :]


def positivity_radius(op: PerturbedOperator, f: cands.CandidateFunction, r_max=0.3,
                      r_min=1e-8, n_r=200, n_t=64) -> float:
    """Largest sampled ``r0`` with ``op f > 0`` on every grid point of ``0 < |z| <= r0``."""
    r, z = _polar_grid(r_max, r_min, n_r, n_t)
    ok = np.all(perturbed_apply(op, f, z) > 0, axis=1)
    if not ok[0]:
        return 0.0
    bad = np.flatnonzero(~ok)
    return float(r[-1] if bad.size == 0 else r[bad[0] - 1])


def minimal_chirka_constant(op: PerturbedOperator, r_max=0.1, r_min=1e-8, n_r=200, n_t=64):
    """Smallest ``C >= 0`` with ``op(log|z| + C|z|) >= 0`` at every grid point of ``0 < |z| <= r_max``.

    ``op`` is linear, so this is ``max(-op log|z| / op |z|)`` over the grid;
    ``op |z|`` must be positive there.
    """
    _, z = _polar_grid(r_max, r_min, n_r, n_t)
    lg = perturbed_apply(op, cands.one_dim("log"), z)
    ab = perturbed_apply(op, cands.one_dim("abs"), z)
    if np.any(ab <= 0):
        raise ValueError("op |z| is not positive on the grid; shrink r_max")
    return float(max(0.0, np.max(-lg / ab)))


# ---------------------------------------------------------------------------
# Hessian bound for LL
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HessianBound:
    min_eig: np.ndarray
    bound: np.ndarray
    holds: bool


def ll_hessian_bound(zp, rtol=1e-9) -> HessianBound:
    """Smallest eigenvalue of ``4 * (mixed Hessian of -log|log|Z'||)`` against ``1/(|Z'|^2 log^2|Z'|)``.

    ``zp`` has shape (..., m) for ``Z'`` in ``C^m``.
    """
    zp = np.asarray(zp, dtype=complex)
    if zp.ndim == 1:
        zp = zp[None]
    m = zp.shape[-1]
    r = np.linalg.norm(zp, axis=-1)
    if np.any(r <= cands.SINGULAR_FLOOR) or np.any(r >= cands.LOGLOG_CEILING):
        raise SingularLocusError("|Z'| must lie in (1e-12, 1/e)")
    pts = np.concatenate([np.zeros(zp.shape[:-1] + (1,), dtype=complex), zp], axis=-1)
    d = cands.loglog(m + 1).derivatives(pts)
    H = 4 * d.mixed[..., 1:, 1:]
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    lo = np.linalg.eigvalsh(H)[..., 0]
    bound = 1.0 / (r * r * np.log(r) ** 2)
    return HessianBound(lo, bound, bool(np.all(lo >= bound * (1 - rtol))))


# ---------------------------------------------------------------------------
# Laplacian along a disc, split into three terms
# ---------------------------------------------------------------------------

def e2_terms_from_jet(lam: cands.CandidateFunction, u, u_z, u_zb, u_zzb) -> TermBreakdown:
    """``I, II, III`` from the 2-jet of a disc at one point."""
    u, u_z, u_zb, u_zzb = (np.asarray(a, dtype=complex) for a in (u, u_z, u_zb, u_zzb))
    d = lam.derivatives(u[None])
    M, Hh, g = d.mixed[0], d.holo[0], d.dz[0]
    I = (np.einsum("jk,j,k->", M, u_z, np.conj(u_z))
         + np.einsum("jk,j,k->", M, u_zb, np.conj(u_zb)))
    II = 2 * np.real(np.einsum("jk,j,k->", Hh, u_z, u_zb))
    III = 2 * np.real(np.dot(g, u_zzb))
    return TermBreakdown({"I": float(np.real(I)), "II": float(II), "III": float(III)})


def e2_terms(lam: cands.CandidateFunction, sol: DiscSolution, zeta0=0.0) -> TermBreakdown:
    """``I + II + III`` at ``zeta0`` on a solved disc."""
    zeta0 = complex(zeta0)
    if abs(zeta0) > sol.jet.rho - 2 * sol.h:
        raise DomainError("zeta0 lies in the masked boundary ring")
    u, uz, uzb, uzzb = (x[0] for x in sol.at(np.array([zeta0])))
    return e2_terms_from_jet(lam, u, uz, uzb, uzzb)


def fd_disc_laplacian(lam: cands.CandidateFunction, sol: DiscSolution, zeta0=0.0, h=None):
    """Finite-difference ``d2/dzeta dzetabar`` of ``lambda o u`` at ``zeta0``."""
    h = 0.01 * sol.jet.rho if h is None else h
    return fd_laplacian_quarter(lambda w: float(lam(sol.poly(np.array([w]))[0:1])[0]), zeta0, h)


# ---------------------------------------------------------------------------
# structure constants and the inequality chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureConstants:
    """Sampled sups of ``|grad Q|`` and ``|grad^2 Q|`` and the constant ``C`` built from them."""

    c_grad: float
    c_hess: float
    C: float
    samples: int
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)


SAFETY_FACTOR = 1.1


def estimate_constants(s: StructureField, lower=None, upper=None, samples=1024,
                       h=1e-4) -> StructureConstants:
    """Estimate ``C`` over a box by a (prefix-nested) Halton sample.

    First derivatives come from ``s.dq_at``; second derivatives are central
    differences of those.  Norms are Frobenius norms over all derivative slots.
    """
    lower = s.lower if lower is None else np.asarray(lower, float)
    upper = s.upper if upper is None else np.asarray(upper, float)
    d = lower.size
    u = qmc.Halton(d, scramble=False).random(samples + 1)[1:]
    x = lower + (upper - lower) * u
    pts = x[..., 0::2] + 1j * x[..., 1::2]
    dz, dzb = s.dq_at(pts)
    grad = np.sqrt(np.sum(np.abs(dz) ** 2 + np.abs(dzb) ** 2, axis=(-3, -2, -1)))
    n = s.n
    hess2 = np.zeros(samples)
    for k in range(n):
        for step in (h, 1j * h):
            e = np.zeros(n, dtype=complex)
            e[k] = step
            p_dz, p_dzb = s.dq_at(pts + e)
            m_dz, m_dzb = s.dq_at(pts - e)
            hess2 += np.sum(np.abs((p_dz - m_dz) / (2 * h)) ** 2
                            + np.abs((p_dzb - m_dzb) / (2 * h)) ** 2, axis=(-3, -2, -1))
    c_grad = float(np.max(grad))
    c_hess = float(np.max(np.sqrt(hess2)))
    return StructureConstants(c_grad, c_hess, SAFETY_FACTOR * max(c_grad, c_hess),
                              samples, lower, upper)


def prop1_coefficients(C, K, r):
    """Coefficients ``(P, R, S)`` of the quadratic form ``P eps^2 + R tau^2 + S eps tau``."""
    r = np.asarray(r, dtype=float)
    L = np.abs(np.log(r))
    P = K - C / L - C * K * r
    R = 1.0 / (4 * r * r * L * L) - C / (r * L) - C * K
    S = -C / (r * L) - C * K
    return P, R, S


def prop1_full(C, K, eps, tau, r):
    P, R, S = prop1_coefficients(C, K, r)
    return P * eps ** 2 + R * tau ** 2 + S * eps * tau


def prop1_leading_slack(C, K, eps, tau, r):
    """Leading three terms minus one eighth of ``tau^2/(r^2 log^2 r) + K eps^2``."""
    r = np.asarray(r, dtype=float)
    L = np.abs(np.log(r))
    lead = tau ** 2 / (4 * r * r * L * L) + K * eps ** 2 - C * eps * tau / (r * L)
    return lead - (tau ** 2 / (r * r * L * L) + K * eps ** 2) / 8


def _form_nonneg(P, R, S):
    """Nonnegativity of ``P x^2 + R y^2 + S x y`` on ``x, y >= 0``."""
    return (P >= 0) & (R >= 0) & ((S >= 0) | (S * S <= 4 * P * R))


@dataclass
class Prop1Certificate:
    C: float
    K: float
    r_max: float
    r_max_eps0: float
    min_full: float
    min_slack: float
    slack_holds: bool
    full_holds: bool
    grid_shape: tuple


def _prefix_max(r, good):
    if good.size == 0 or not good[0]:
        return 0.0
    bad = np.flatnonzero(~good)
    return float(r[-1] if bad.size == 0 else r[bad[0] - 1])


def certify_prop1_inequality(C, K, r_range=(1e-12, 1e-2), eps=None, tau=None, n_r=20,
                             r_scan=4000) -> Prop1Certificate:
    """Check the quadratic inequality chain on an ``(eps, tau, r)`` grid.

    ``r_max`` is the largest radius below which the full form is nonnegative
    for every ``eps, tau >= 0`` (exact 2x2 test on a fine log-scan);
    ``r_max_eps0`` is the same for the row ``eps = 0``.
    """
    C, K = float(C), float(K)
    if C > 0 and K <= 4 * C * C:
        raise ValueError("constant too small: need K > 4 C^2")
    if K < 0:
        raise ValueError("constant too small: need K >= 0")
    lo, hi = r_range
    if not (0 < lo < hi < 1):
        raise ValueError("empty admissible r-range")
    eps = np.linspace(0, 1, 50) if eps is None else np.asarray(eps, float)
    tau = np.linspace(0, 1, 50) if tau is None else np.asarray(tau, float)
    r = np.geomspace(lo, hi, n_r)
    E, T, Rg = np.meshgrid(eps, tau, r, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore"):
        full = prop1_full(C, K, E, T, Rg)
        slack = prop1_leading_slack(C, K, E, T, Rg)
    rs = np.geomspace(1e-300, np.exp(-1.0) * 0.999, r_scan)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        P, R, S = prop1_coefficients(C, K, rs)
        good = _form_nonneg(P, R, S)
    r_max = _prefix_max(rs, good)
    r_max0 = _prefix_max(rs, R >= 0)
    min_full = float(np.min(full))
    min_slack = float(np.min(slack))
    return Prop1Certificate(C, K, r_max, r_max0, min_full, min_slack,
                            bool(min_slack >= -1e-12 * np.max(np.abs(slack))),
                            bool(min_full >= -1e-12 * np.max(np.abs(full))), E.shape)


# ---------------------------------------------------------------------------
# certification over discs
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("center", "v", "rho", "I", "II", "III", "total", "verdict")


@dataclass
class JetRecord:
    jet: JetSpec
    terms: Optional[TermBreakdown]
    verdict: str
    error: str = ""

    def row(self):
        c, v = self.jet.center, self.jet.v
        t = self.terms
        vals = [t[k] if t is not None and k in t.terms else np.nan for k in ("I", "II", "III")]
        return {"center": " ".join(f"{x.real!r}{x.imag:+.17g}j" for x in c),
                "v": " ".join(f"{x.real!r}{x.imag:+.17g}j" for x in v),
                "rho": repr(float(self.jet.rho)),
                "I": repr(float(vals[0])), "II": repr(float(vals[1])), "III": repr(float(vals[2])),
                "total": repr(float(t.total)) if t is not None else "nan", "verdict": self.verdict}


@dataclass
class CertificationReport:
    records: list
    slack: float

    @property
    def violations(self):
        return [r for r in self.records if r.verdict == "fail"]

    @property
    def failures(self):
        return [r for r in self.records if r.verdict == "error"]

    @property
    def passed(self) -> bool:
        return not self.violations and not self.failures

    def rows(self):
        return [r.row() for r in self.records]


def certify_psh_on_discs(lam: cands.CandidateFunction, s: StructureField, jets: Sequence[JetSpec],
                         tol=1e-8, grid_n=32, slack=None, degree=16) -> CertificationReport:
    """Solve each disc and test ``d2(lambda o u)/dzeta dzetabar (0) >= -slack``.

    ``slack`` defaults to ``10 tol / rho^2``.  Solver failures are recorded
    per jet with verdict ``error``.
    """
    records = []
    worst_slack = 0.0
    for jet in jets:
        sl = 10 * tol / jet.rho ** 2 if slack is None else slack
        worst_slack = max(worst_slack, sl)
        try:
            sol = solve_disc(s, jet, grid_n=grid_n, tol=tol, degree=degree)
            terms = e2_terms(lam, sol)
        except (AlmostCxError, ValueError) as exc:
            records.append(JetRecord(jet, None, "error", str(exc)))
            continue
        records.append(JetRecord(jet, terms, "pass" if terms.total >= -sl else "fail"))
    return CertificationReport(records, worst_slack)


def sample_axis_jets(n, count, radius, seed=0, z1_halfwidth=0.5, rho=0.02, v_scale=1.0,
                     min_radius=None):
    """Random jets with centers at ``|Z'| <= radius`` and random unit-scale derivatives."""
    rng = np.random.default_rng(seed)
    jets = []
    lo = radius * 1e-3 if min_radius is None else min_radius
    for _ in range(count):
        z1 = complex(*rng.uniform(-z1_halfwidth, z1_halfwidth, 2))
        d = rng.normal(size=n - 1) + 1j * rng.normal(size=n - 1)
        d /= np.linalg.norm(d)
        rr = np.exp(rng.uniform(np.log(lo), np.log(radius)))
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        v *= v_scale * rng.uniform(0.05, 1.0) / np.linalg.norm(v)
        jets.append(JetSpec(np.concatenate([[z1], rr * d]), v, rho))
    return jets


@dataclass
class Prop3Report:
    K: Optional[float]
    threshold_radius: float
    fitted_C: float
    M: float
    violations: int
    records: list


def _axis_gradient(s: StructureField, z1_samples):
    pts = np.zeros((len(z1_samples), s.n), dtype=complex)
    pts[:, 0] = z1_samples
    dz, dzb = s.dq_at(pts)
    return float(max(np.max(np.abs(dz)), np.max(np.abs(dzb))))


def prop3_certify(s: StructureField, jets: Sequence[JetSpec], K=None, tol=1e-8, grid_n=32,
                  grad_tol=1e-6, k_cap=2 ** 30, degree=16) -> Prop3Report:
    """Find ``K`` (doubling from 1, or use the given one) making ``log|Z'| + K|Z|^2`` pass on ``jets``.

    Requires ``Q = 0`` and ``grad Q = 0`` along the axis.  Also reports the
    fitted ``C`` in ``Delta(log|Z'| o u)/4 >= -C (eps^2 + tau^2)`` and the
    ``M`` in ``Delta(|Z|^2 o u)/4 >= M (eps^2 + tau^2)``.
    """
    z1s = np.linspace(-0.5, 0.5, 5) + 0.1j
    if _axis_gradient(s, z1s) > grad_tol:
        raise NormalizationError("normalization precondition unmet: grad Q != 0 on the axis")
    lt, nsq = cands.log_tail(s.n), cands.norm_sq(s.n)
    rows = []
    for jet in jets:
        try:
            sol = solve_disc(s, jet, grid_n=grid_n, tol=tol, degree=degree)
            a, b = e2_terms(lt, sol), e2_terms(nsq, sol)
        except (AlmostCxError, ValueError) as exc:
            rows.append((jet, None, None, str(exc)))
            continue
        rows.append((jet, a, b, ""))
    good = [r for r in rows if r[1] is not None]
    if not good:
        raise SolverError("no jet could be solved")
    size = np.array([np.sum(np.abs(j.v) ** 2) for j, *_ in good])
    log_tot = np.array([a.total for _, a, _, _ in good])
    sq_tot = np.array([b.total for _, _, b, _ in good])
    fitted_C = float(max(0.0, np.max(-log_tot / size)))
    M = float(np.min(sq_tot / size))
    slack = np.array([10 * tol / j.rho ** 2 for j, *_ in good])

    def violations(k):
        return int(np.sum(log_tot + k * sq_tot < -slack))

    if K is None:
        k = 1.0
        while violations(k) and k < k_cap:
            k *= 2
        K_found = k if violations(k) == 0 else None
    else:
        K_found = float(K) if violations(K) == 0 else None
    k_eval = K_found if K_found is not None else (k_cap if K is None else float(K))
    records = []
    for jet, a, b, err in rows:
        if a is None:
            records.append(JetRecord(jet, None, "error", err))
            continue
        tb = TermBreakdown({"I": a["I"] + k_eval * b["I"], "II": a["II"] + k_eval * b["II"],
                            "III": a["III"] + k_eval * b["III"]})
        sl = 10 * tol / jet.rho ** 2
        records.append(JetRecord(jet, tb, "pass" if tb.total >= -sl else "fail"))
    radius = float(max(np.linalg.norm(j.center[1:]) for j, *_ in good))
    return Prop3Report(K_found, radius, fitted_C, M, violations(k_eval), records)
