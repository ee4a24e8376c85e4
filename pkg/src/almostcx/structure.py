"""Almost complex structures in Q-form and J-form.

A structure on an open box of ``C^n`` is encoded by the complex matrix field
``Q`` of the equation ``d(u-bar)/d zeta = Q(u) du/d zeta``.  The matching real
structure ``J`` acts on ``R^{2n}`` with coordinates ``(x_1, y_1, ..., x_n, y_n)``.

Writing ``A`` for the antilinear map ``v -> conj(Q) conj(v)``, the two forms are
related by ``J = (1 - A)^{-1} (1 + A) J_st`` and ``A = (J - J_st)(J + J_st)^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import (AdmissibilityError, DomainError, NijenhuisObstructionError,
                     NormalizationError)
from .expr import parse
from .wirtinger import to_complex, to_real

ADMISSIBLE_NORM = 0.5


# ---------------------------------------------------------------------------
# linear algebra between the two forms
# ---------------------------------------------------------------------------

def j_standard(n: int) -> np.ndarray:
    """Multiplication by ``i`` on ``C^n`` as a real (2n, 2n) matrix."""
    return np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))


def realify_linear(P):
    """Real matrix of ``v -> P v`` for complex ``P`` of shape (..., n, n)."""
    P = np.asarray(P, dtype=complex)
    n = P.shape[-1]
    out = np.zeros(P.shape[:-2] + (2 * n, 2 * n))
    a, b = P.real, P.imag
    out[..., 0::2, 0::2] = a
    out[..., 0::2, 1::2] = -b
    out[..., 1::2, 0::2] = b
    out[..., 1::2, 1::2] = a
    return out


def realify_antilinear(M):
    """Real matrix of ``v -> M conj(v)``."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[-1]
    out = np.zeros(M.shape[:-2] + (2 * n, 2 * n))
    a, b = M.real, M.imag
    out[..., 0::2, 0::2] = a
    out[..., 0::2, 1::2] = b
    out[..., 1::2, 0::2] = b
    out[..., 1::2, 1::2] = -a
    return out


def operator_norm(q):
    return np.linalg.norm(np.asarray(q, dtype=complex), ord=2, axis=(-2, -1))


def q_to_j(q):
    """Real structure matrix (..., 2n, 2n) of a Q matrix (..., n, n)."""
    q = np.asarray(q, dtype=complex)
    n = q.shape[-1]
    A = realify_antilinear(np.conj(q))
    eye = np.eye(2 * n)
    lhs = eye - A
    smin = np.linalg.svd(lhs, compute_uv=False)[..., -1]
    if np.any(smin < 1e-12):
        raise AdmissibilityError("structure out of admissible range: 1 + conj(Q) is singular")
    return np.linalg.solve(lhs, (eye + A) @ j_standard(n))


def j_to_q(j, tol=1e-10):
    """Q matrix (..., n, n) of a real structure matrix (..., 2n, 2n)."""
    j = np.asarray(j, dtype=float)
    m = j.shape[-1]
    n = m // 2
    eye = np.eye(m)
    sq_err = np.max(np.abs(j @ j + eye), axis=(-2, -1))
    scale = 1.0 + np.max(np.abs(j), axis=(-2, -1)) ** 2
    if np.any(sq_err > tol * scale):
        raise AdmissibilityError(f"J^2 != -1 (error {np.max(sq_err):.3g})")
    js = j_standard(n)
    plus = j + js
    smin = np.linalg.svd(plus, compute_uv=False)[..., -1]
    if np.any(smin < 1e-12):
        raise AdmissibilityError("structure out of admissible range: J + J_st is singular")
    # A = (J - J_st)(J + J_st)^{-1}, solved as a right division
    A = np.swapaxes(np.linalg.solve(np.swapaxes(plus, -1, -2), np.swapaxes(j - js, -1, -2)), -1, -2)
    M = A[..., 0::2, 0::2] + 1j * A[..., 1::2, 0::2]
    return np.conj(M)


# ---------------------------------------------------------------------------
# structure fields
# ---------------------------------------------------------------------------

def _box_samples(lower, upper, count, seed=0):
    """Corners (when few enough) plus a Halton prefix of the box."""
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    d = lower.size
    pts = [lower + (upper - lower) * qmc.Halton(d, scramble=False).random(count + 1)[1:]]
    if d <= 10:
        corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
        pts.append(lower + (upper - lower) * corners)
    pts.append(((lower + upper) / 2)[None])
    return to_complex(np.concatenate(pts))


@dataclass(frozen=True)
class StructureField:
    """Almost complex structure on an axis-aligned box of ``C^n`` given by ``Q``.

    ``q_func`` maps points (..., n) to matrices (..., n, n).  ``dq_func``, when
    given, returns exact ``(dQ/dz_j, dQ/dzbar_j)`` with the derivative index
    last; otherwise derivatives are central finite differences and
    ``analytic_derivatives`` is False.
    """

    n: int
    q_func: Callable = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    dq_func: Optional[Callable] = field(default=None, repr=False)
    name: str = "custom"
    fd_step: float = 1e-6
    validate: bool = True
    sup_norm: float = field(default=np.nan, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != (2 * self.n,) or np.any(self.upper <= self.lower):
            raise ValueError("domain box must have 2n increasing real bounds")
        if self.validate:
            pts = _box_samples(self.lower, self.upper, 256)
            sup = float(np.max(operator_norm(self.q_at(pts))))
            object.__setattr__(self, "sup_norm", sup)
            if sup >= ADMISSIBLE_NORM:
                raise AdmissibilityError(
                    f"structure out of admissible range: sup |Q| = {sup:.4g} >= 1/2")

    @property
    def analytic_derivatives(self) -> bool:
        return self.dq_func is not None

    def contains(self, points, margin=0.0):
        x = to_real(points)
        return np.all((x >= self.lower + margin) & (x <= self.upper - margin), axis=-1)

    def q_at(self, points):
        points = np.asarray(points, dtype=complex)
        return np.asarray(self.q_func(points), dtype=complex)

    def dq_at(self, points):
        """``(dQ/dz, dQ/dzbar)`` each of shape (..., n, n, n), derivative index last."""
        points = np.asarray(points, dtype=complex)
        if self.dq_func is not None:
            return self.dq_func(points)
        h = self.fd_step
        dx, dy = [], []
        for j in range(self.n):
            e = np.zeros(self.n, dtype=complex)
            e[j] = h
            dx.append((self.q_at(points + e) - self.q_at(points - e)) / (2 * h))
            dy.append((self.q_at(points + 1j * e) - self.q_at(points - 1j * e)) / (2 * h))
        dx, dy = np.stack(dx, -1), np.stack(dy, -1)
        return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)

    def j_at(self, x):
        """Real structure matrix at real points (..., 2n)."""
        return q_to_j(self.q_at(to_complex(x)))

    def jfield(self) -> "JMatrixField":
        return JMatrixField(self.j_at, self.lower, self.upper)


@dataclass(frozen=True)
class JMatrixField:
    """A real structure ``p -> J(p)`` on a box of ``R^{2n}``."""

    j_func: Callable = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def j_at(self, x):
        return np.asarray(self.j_func(np.asarray(x, dtype=float)), dtype=float)


def _zero_q(n):
    def q(points):
        return np.zeros(np.shape(points)[:-1] + (n, n), dtype=complex)

    def dq(points):
        z = np.zeros(np.shape(points)[:-1] + (n, n, n), dtype=complex)
        return z, z.copy()

    return q, dq


def standard_structure(n: int = 2, halfwidth: float = 1.0) -> StructureField:
    q, dq = _zero_q(n)
    return StructureField(n, q, -halfwidth * np.ones(2 * n), halfwidth * np.ones(2 * n),
                          dq_func=dq, name="standard")


def from_expressions(entries, lower, upper, name="expression") -> StructureField:
    """Structure whose Q entries are closed-form expressions in ``z1..zn``.

    Derivatives are exact (forward-mode jets).
    """
    n = len(entries)
    exprs = [[parse(str(e), n) for e in row] for row in entries]
    if any(len(row) != n for row in exprs):
        raise ValueError("Q must be square")

    def q(points):
        out = np.zeros(points.shape[:-1] + (n, n), dtype=complex)
        for r in range(n):
            for c in range(n):
                if exprs[r][c].source.strip() not in ("0", "0.0"):
                    out[..., r, c] = exprs[r][c].evaluate(points)
        return out

    def dq(points):
        dz = np.zeros(points.shape[:-1] + (n, n, n), dtype=complex)
        dzb = np.zeros_like(dz)
        for r in range(n):
            for c in range(n):
                if exprs[r][c].source.strip() in ("0", "0.0"):
                    continue
                jt = exprs[r][c].jet(points, order=1)
                dz[..., r, c, :] = jt.dz()
                dzb[..., r, c, :] = jt.dzbar()
        return dz, dzb

    return StructureField(n, q, lower, upper, dq_func=dq, name=name)


EXAMPLE_LOWER = np.array([-1.5, -1.5, -0.35, -0.35])
EXAMPLE_UPPER = -EXAMPLE_LOWER


def example_structure() -> StructureField:
    """The structure on ``C^2`` with ``Q = [[0, 0], [z2, 0]]``."""

    def q(points):
        out = np.zeros(points.shape[:-1] + (2, 2), dtype=complex)
        out[..., 1, 0] = points[..., 1]
        return out

    def dq(points):
        dz = np.zeros(points.shape[:-1] + (2, 2, 2), dtype=complex)
        dz[..., 1, 0, 1] = 1.0
        return dz, np.zeros_like(dz)

    return StructureField(2, q, EXAMPLE_LOWER, EXAMPLE_UPPER, dq_func=dq, name="example_part3")


def example_jfield(z1_halfwidth=1.5, z2_halfwidth=0.7) -> JMatrixField:
    """J form of the example on a wider box.

    ``J`` exists whenever ``|z2| < 1``, so tensor computations may leave the
    ``|Q| < 1/2`` region the disc estimates need.
    """
    if z2_halfwidth * np.sqrt(2) >= 1.0:
        raise AdmissibilityError("structure out of admissible range: |z2| must stay below 1")
    s = example_structure()
    hw = np.array([z1_halfwidth, z1_halfwidth, z2_halfwidth, z2_halfwidth])
    return JMatrixField(lambda x: q_to_j(s.q_func(to_complex(x))), -hw, hw)


TOY_Q22 = "(0.4 + 0.2*z1)*z2 + 0.3*z2*conj(z2)"


def toy_normalizable() -> StructureField:
    """A structure standard along ``C x {0}`` whose Nijenhuis tensor vanishes there.

    Its (0,1) frame has ``alpha_22 = (0.4 + 0.2 conj(z1)) conj(z2) + 0.3 |z2|^2``
    and no other nonzero coefficient, so normalization needs ``b != 0`` and the
    remainder is genuinely quadratic.
    """
    s = from_expressions([["0", "0"], ["0", TOY_Q22]],
                         [-1.0, -1.0, -0.35, -0.35], [1.0, 1.0, 0.35, 0.35],
                         name="toy_normalizable")
    return s


BUILTIN_STRUCTURES = {
    "standard": lambda: standard_structure(2),
    "example_part3": example_structure,
    "toy_normalizable": toy_normalizable,
}


def structure_from_config(cfg) -> StructureField:
    """Build a structure from a parsed config (dict) or a ``"builtin: name"`` string.

    Config form::

        {"n": 2, "q": [["0", "0"], ["z2", "0"]],
         "lower": [-1, -1, -0.3, -0.3], "upper": [1, 1, 0.3, 0.3]}
    """
    if isinstance(cfg, str):
        text = cfg.strip()
        if text.startswith("builtin:"):
            text = text.split(":", 1)[1].strip()
        if text not in BUILTIN_STRUCTURES:
            raise KeyError(f"unknown builtin structure {text!r}; "
                           f"choose from {sorted(BUILTIN_STRUCTURES)}")
        return BUILTIN_STRUCTURES[text]()
    if "builtin" in cfg:
        return structure_from_config(str(cfg["builtin"]))
    n = int(cfg["n"])
    hw = float(cfg.get("halfwidth", 0.3))
    lower = cfg.get("lower", [-hw] * (2 * n))
    upper = cfg.get("upper", [hw] * (2 * n))
    return from_expressions(cfg["q"], lower, upper, name=cfg.get("name", "expression"))


def pullback_of_standard(phi: Callable, lower, upper, h=1e-6) -> JMatrixField:
    """``J = D(phi)^{-1} J_st D(phi)`` for a real diffeomorphism ``phi`` of ``R^{2n}``.

    Such structures are integrable, which makes them a control for the
    Nijenhuis tensor.
    """
    lower = np.asarray(lower, float)
    n = lower.size // 2
    js = j_standard(n)

    def j(x):
        x = np.asarray(x, float)
        cols = []
        for p in range(2 * n):
            e = np.zeros(2 * n)
            e[p] = h
            cols.append((phi(x + e) - phi(x - e)) / (2 * h))
        D = np.stack(cols, -1)
        return np.linalg.solve(D, js @ D)

    return JMatrixField(j, lower, np.asarray(upper, float))


# ---------------------------------------------------------------------------
# Nijenhuis tensor
# ---------------------------------------------------------------------------

def _default_step(field_):
    return 1e-4 * float(np.max(field_.upper - field_.lower))


def nijenhuis(jf, p, X, Y, h=None):
    """``N(X, Y) = [JX, JY] - J[JX, Y] - J[X, JY] - [X, Y]`` for constant fields X, Y.

    Brackets reduce to directional derivatives of ``J``, taken by central
    differences with step ``h``.  Antisymmetry holds exactly.
    """
    if isinstance(jf, StructureField):
        jf = jf.jfield()
    p, X, Y = (np.asarray(a, dtype=float) for a in (p, X, Y))
    h = _default_step(jf) if h is None else float(h)
    J = jf.j_at(p)
    JX, JY = J @ X, J @ Y
    reach = 2 * h * max(1.0, *(np.max(np.abs(v)) for v in (X, Y, JX, JY)))
    if np.any(p - reach < jf.lower) or np.any(p + reach > jf.upper):
        raise DomainError("point too close to the domain boundary for the difference stencil")

    def dJ(V):
        return (jf.j_at(p + h * V) - jf.j_at(p - h * V)) / (2 * h)

    # [A, B] = DB.A - DA.B with A = JX (DA.V = dJ(V) X), B = Y constant, etc.
    bracket_jx_jy = dJ(JX) @ Y - dJ(JY) @ X
    bracket_jx_y = -(dJ(Y) @ X)
    bracket_x_jy = dJ(X) @ Y
    return bracket_jx_jy - J @ bracket_jx_y - J @ bracket_x_jy


def nijenhuis_refined(jf, p, X, Y, h=None):
    """Values at steps ``h`` and ``h/2`` plus their relative difference."""
    if isinstance(jf, StructureField):
        jf = jf.jfield()
    h = _default_step(jf) if h is None else float(h)
    n1 = nijenhuis(jf, p, X, Y, h)
    n2 = nijenhuis(jf, p, X, Y, h / 2)
    rel = np.linalg.norm(n1 - n2) / max(np.linalg.norm(n2), 1e-300)
    return n1, n2, rel


# ---------------------------------------------------------------------------
# (0,1) frames
# ---------------------------------------------------------------------------

def zeroone_frame(s: StructureField, points, check_tol=1e-10):
    """Coefficients ``alpha[..., j, q]`` of ``Lbar_j = d/dzbar_j + sum_q alpha_jq d/dz_q``.

    Solved from the ``-i`` eigenspace of the realified ``J`` at each point.
    """
    points = np.asarray(points, dtype=complex)
    q = s.q_at(points)
    if np.any(operator_norm(q) >= ADMISSIBLE_NORM):
        raise AdmissibilityError("frame construction singular: |Q| >= 1/2")
    J = q_to_j(q)
    return frame_from_j(J, check_tol)


def frame_from_j(J, check_tol=1e-10):
    J = np.asarray(J, dtype=float)
    m = J.shape[-1]
    n = m // 2
    Jc = J + 1j * np.eye(m)
    # a complex field w = sum_q c_q d/dz_q + d_q d/dzbar_q in real components:
    # w^x_q = (c_q + d_q)/2, w^y_q = i (c_q - d_q)/2
    B = np.zeros((m, n), dtype=complex)   # coefficient of alpha_q (the d/dz_q part)
    W0 = np.zeros((m, n), dtype=complex)  # d/dzbar_j for each column j
    for k in range(n):
        B[2 * k, k] = 0.5
        B[2 * k + 1, k] = -0.5j
        W0[2 * k, k] = 0.5
        W0[2 * k + 1, k] = 0.5j
    A = Jc @ B
    rhs = -(Jc @ W0)
    AH = np.conj(np.swapaxes(A, -1, -2))
    sol = np.linalg.solve(AH @ A, AH @ rhs)  # (..., q, j)
    resid = np.max(np.abs(A @ sol - rhs))
    if resid > check_tol * (1 + np.max(np.abs(J))):
        raise AdmissibilityError(f"(0,1) frame system inconsistent (residual {resid:.3g})")
    return np.swapaxes(sol, -1, -2)


# ---------------------------------------------------------------------------
# normalization along the axis C x {0}
# ---------------------------------------------------------------------------

def _axis_points(z1):
    return np.asarray(z1, dtype=complex)


@dataclass(frozen=True)
class NormalizationMap:
    """``Z_1 = z_1``, ``Z_r = z_r + sum a^r_kl(z_1) z_k conj(z_l) + b^r_kl(z_1) conj(z_k z_l)``.

    Coefficients are arrays indexed ``[..., r, k, l]`` over all of ``0..n-1``,
    with zeros whenever an index refers to ``z_1``.  They are produced from
    derivatives of the (0,1) frame along the axis, evaluated on demand.
    """

    structure: StructureField = field(repr=False)
    h: float = 1e-4
    identity: bool = False

    @property
    def n(self):
        return self.structure.n

    def frame_derivatives(self, z1):
        """``(d alpha_{j,r}/dz_k, d alpha_{j,r}/dzbar_k)`` at ``(z1, 0, ...)``, indexed [..., j, r, k]."""
        z1 = np.asarray(z1, dtype=complex)
        n, h = self.n, self.h
        base = np.zeros(z1.shape + (n,), dtype=complex)
        base[..., 0] = z1
        dz = np.zeros(z1.shape + (n, n, n), dtype=complex)
        dzb = np.zeros_like(dz)
        for k in range(1, n):
            e = np.zeros(n, dtype=complex)
            e[k] = h
            ax = (zeroone_frame(self.structure, base + e)
                  - zeroone_frame(self.structure, base - e)) / (2 * h)
            ay = (zeroone_frame(self.structure, base + 1j * e)
                  - zeroone_frame(self.structure, base - 1j * e)) / (2 * h)
            dz[..., k] = 0.5 * (ax - 1j * ay)
            dzb[..., k] = 0.5 * (ax + 1j * ay)
        return dz, dzb

    def coefficients(self, z1):
        z1 = np.asarray(z1, dtype=complex)
        n = self.n
        a = np.zeros(z1.shape + (n, n, n), dtype=complex)
        b = np.zeros_like(a)
        if self.identity:
            return a, b
        dz, dzb = self.frame_derivatives(z1)
        for r in range(1, n):
            for k in range(1, n):
                for l in range(1, n):
                    a[..., r, k, l] = -dz[..., l, r, k]
                    b[..., r, k, l] = -0.25 * (dzb[..., l, r, k] + dzb[..., k, r, l])
        return a, b

    def defining_residual(self, z1):
        """Max of ``|b^r_kj + b^r_jk + sym(d alpha_{j,r}/dzbar_k)|`` (solved exactly)."""
        a, b = self.coefficients(z1)
        _, dzb = self.frame_derivatives(z1)
        n = self.n
        worst = 0.0
        for r in range(1, n):
            for j in range(1, n):
                for k in range(1, n):
                    sym = 0.5 * (dzb[..., j, r, k] + dzb[..., k, r, j])
                    worst = max(worst, float(np.max(np.abs(b[..., r, k, j] + b[..., r, j, k] + sym))))
        return worst

    def __call__(self, points):
        points = np.asarray(points, dtype=complex)
        if self.identity:
            return points.copy()
        a, b = self.coefficients(points[..., 0])
        zp = points.copy()
        zp[..., 0] = 0.0
        zc = np.conj(zp)
        quad = (np.einsum("...rkl,...k,...l->...r", a, zp, zc)
                + np.einsum("...rkl,...k,...l->...r", b, zc, zc))
        out = points + quad
        out[..., 0] = points[..., 0]
        return out

    def inverse(self, w, tol=1e-15, max_iter=60):
        w = np.asarray(w, dtype=complex)
        z = w.copy()
        for _ in range(max_iter):
            z_new = w - (self(z) - z)
            step = np.max(np.abs(z_new - z)) if z.size else 0.0
            z = z_new
            if step <= tol * (1 + np.max(np.abs(w))):
                break
        return z

    def jacobian_real(self, points, h=1e-6):
        """Real Jacobian (..., 2n, 2n) by central differences."""
        points = np.asarray(points, dtype=complex)
        n = self.n
        cols = []
        for p in range(2 * n):
            e = np.zeros(n, dtype=complex)
            e[p // 2] = h if p % 2 == 0 else 1j * h
            cols.append(to_real(self(points + e)) - to_real(self(points - e)))
        return np.stack(cols, -1) / (2 * h)

    def lbar_of_coordinates(self, points, h=1e-6):
        """``Lbar_j(Z_r)`` indexed [..., j, r] for the structure's (0,1) frame."""
        points = np.asarray(points, dtype=complex)
        D = self.jacobian_real(points, h)          # d(Re Z, Im Z)/d(x, y)
        Zx = D[..., 0::2, :] + 1j * D[..., 1::2, :]  # dZ_r / d(real coords)
        dZdz = 0.5 * (Zx[..., 0::2] - 1j * Zx[..., 1::2])    # [..., r, q]
        dZdzb = 0.5 * (Zx[..., 0::2] + 1j * Zx[..., 1::2])
        alpha = zeroone_frame(self.structure, points)         # [..., j, q]
        return np.swapaxes(dZdzb, -1, -2) + np.einsum("...jq,...rq->...jr", alpha, dZdz)


def build_normalization(s: StructureField, z1_samples=None, tol=1e-6, h=1e-4) -> NormalizationMap:
    """Quadratic coordinate change killing the frame's linear part along the axis.

    Raises :class:`NijenhuisObstructionError` when the symmetry condition
    ``d alpha_{j,q}/dzbar_k = d alpha_{k,q}/dzbar_j`` fails on the axis.
    """
    n = s.n
    if z1_samples is None:
        lo = s.lower[:2] * 0.8
        hi = s.upper[:2] * 0.8
        gx = np.linspace(lo[0], hi[0], 3)
        gy = np.linspace(lo[1], hi[1], 3)
        z1_samples = (gx[:, None] + 1j * gy[None, :]).ravel()
    z1_samples = np.asarray(z1_samples, dtype=complex)
    m = NormalizationMap(s, h=h)
    base = np.zeros(z1_samples.shape + (n,), dtype=complex)
    base[..., 0] = z1_samples
    alpha0 = zeroone_frame(s, base)
    if np.max(np.abs(alpha0)) > tol:
        raise NormalizationError("structure is not standard along the axis")
    dz, dzb = m.frame_derivatives(z1_samples)
    scale = 1.0 + np.max(np.abs(dzb))
    # bracket of Lbar_j, Lbar_k on the axis: d alpha_{k,q}/dzbar_j - d alpha_{j,q}/dzbar_k
    full_dzb = dzb.copy()
    asym = 0.0
    for j in range(n):
        for k in range(n):
            d_jk = full_dzb[..., j, :, k] if k >= 1 else np.zeros_like(full_dzb[..., j, :, 1])
            d_kj = full_dzb[..., k, :, j] if j >= 1 else np.zeros_like(full_dzb[..., k, :, 1])
            asym = max(asym, float(np.max(np.abs(d_jk - d_kj))))
    if asym > tol * scale:
        raise NijenhuisObstructionError(
            f"Nijenhuis obstruction nonzero (symmetry defect {asym:.3g})")
    # linear terms the quadratic change cannot reach: alpha_{1,r}, alpha_{j,1}
    unreachable = max(float(np.max(np.abs(dz[..., 0, :, :]))),
                      float(np.max(np.abs(dz[..., :, 0, :]))),
                      float(np.max(np.abs(dzb[..., :, 0, :]))))
    if unreachable > tol * scale:
        raise NormalizationError(
            f"frame terms involving z_1 have a linear part ({unreachable:.3g}); "
            "the quadratic change cannot remove them")
    if np.max(np.abs(dz)) <= tol and np.max(np.abs(dzb)) <= tol:
        return NormalizationMap(s, h=h, identity=True)
    return m


def identity_normalization(s: StructureField) -> NormalizationMap:
    return NormalizationMap(s, identity=True)


def pushforward_structure(s: StructureField, m: NormalizationMap, validate=True) -> StructureField:
    """The structure ``s`` written in the coordinates ``W = m(z)``."""
    if m.identity:
        return s
    n = s.n

    def q(w):
        w = np.asarray(w, dtype=complex)
        z = m.inverse(w)
        D = m.jacobian_real(z)
        det = np.abs(np.linalg.det(D))
        if np.any(det < 1e-10):
            raise DomainError("normalization Jacobian singular")
        Jz = q_to_j(s.q_at(z))
        Jw = D @ Jz @ np.linalg.inv(D)
        return j_to_q(Jw, tol=1e-8)

    return StructureField(n, q, s.lower, s.upper, dq_func=None,
                          name=f"{s.name}:normalized", fd_step=1e-4, validate=validate)
