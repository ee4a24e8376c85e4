"""Real-valued candidate functions with exact Wirtinger derivatives.

Each candidate is a closure producing a second-order :class:`~almostcx.jet.Jet`
at a batch of points, plus a guard describing where evaluation is refused.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SingularLocusError
from .expr import parse
from .jet import Jet

SINGULAR_FLOOR = 1e-12
LOGLOG_CEILING = np.exp(-1.0)


@dataclass(frozen=True)
class CandidateDerivatives:
    value: np.ndarray
    dz: np.ndarray      # (..., n)
    dzb: np.ndarray     # (..., n)
    mixed: np.ndarray   # (..., n, n), [j, k] = d2/dz_j dzbar_k
    holo: np.ndarray    # (..., n, n), d2/dz_j dz_k


@dataclass(frozen=True)
class CandidateFunction:
    """A real function on an open subset of ``C^n``.

    ``jet_func`` maps a list of coordinate jets to the jet of the function.
    ``guard`` returns a boolean mask of points where evaluation is refused;
    ``singular_locus`` describes that set in words.
    """

    name: str
    n: int
    jet_func: Callable = field(repr=False)
    guard: Optional[Callable] = field(default=None, repr=False)
    singular_locus: str = ""

    def _check(self, points):
        if points.shape[-1] != self.n:
            raise ValueError(f"{self.name} expects points in C^{self.n}")
        if self.guard is not None:
            bad = np.asarray(self.guard(points))
            if np.any(bad):
                raise SingularLocusError(f"{self.name}: evaluation refused on {self.singular_locus}")

    def jet(self, points) -> Jet:
        points = np.asarray(points, dtype=complex)
        self._check(points)
        zs = Jet.variables(points, order=2)
        out = self.jet_func(zs)
        if not isinstance(out, Jet):
            out = Jet.constant(out, points.shape[:-1], 2 * self.n)
        return out

    def derivatives(self, points) -> CandidateDerivatives:
        jt = self.jet(points)
        return CandidateDerivatives(jt.v.real, jt.dz(), jt.dzbar(), jt.d2_mixed(), jt.d2_holo())

    def __call__(self, points):
        points = np.asarray(points, dtype=complex)
        self._check(points)
        zs = Jet.variables(points, order=1)
        out = self.jet_func(zs)
        return np.real(out.v if isinstance(out, Jet) else out)


def _norm_sq(zs):
    total = zs[0] * zs[0].conj()
    for z in zs[1:]:
        total = total + z * z.conj()
    return total.real()


def _tail_norm(points, start=1):
    return np.linalg.norm(np.asarray(points)[..., start:], axis=-1)


def _loglog_guard(points):
    r = _tail_norm(points)
    return (r <= SINGULAR_FLOOR) | (r >= LOGLOG_CEILING)


def _log_guard(points):
    return _tail_norm(points) <= SINGULAR_FLOOR


def loglog(n: int = 2) -> CandidateFunction:
    """``LL(Z') = -log|log|Z'||`` with ``Z' = (z_2, ..., z_n)``."""

    def f(zs):
        # |log|Z'|| = -log(|Z'|^2) / 2 on |Z'| < 1
        return -((-0.5) * _norm_sq(zs[1:]).log()).log()

    return CandidateFunction("loglog", n, f, _loglog_guard,
                             "|Z'| outside (1e-12, 1/e)")


def prop1(K: float, n: int = 2) -> CandidateFunction:
    """``LL(Z') + K |z_1|^2``."""
    ll = loglog(n).jet_func

    def f(zs):
        return ll(zs) + K * (zs[0] * zs[0].conj()).real()

    return CandidateFunction(f"prop1(K={K:g})", n, f, _loglog_guard, "|Z'| outside (1e-12, 1/e)")


def log_tail(n: int = 2) -> CandidateFunction:
    """``log|Z'|``."""

    def f(zs):
        return 0.5 * _norm_sq(zs[1:]).log()

    return CandidateFunction("log|Z'|", n, f, _log_guard, "Z' = 0")


def prop3(K: float, n: int = 2) -> CandidateFunction:
    """``log|Z'| + K |Z|^2``."""

    def f(zs):
        return 0.5 * _norm_sq(zs[1:]).log() + K * _norm_sq(zs)

    return CandidateFunction(f"prop3(K={K:g})", n, f, _log_guard, "Z' = 0")


def log_z2() -> CandidateFunction:
    return CandidateFunction("log|z2|", 2, lambda zs: 0.5 * (zs[1] * zs[1].conj()).real().log(),
                             _log_guard, "z2 = 0")


def chirka(C: float, n: int = 2) -> CandidateFunction:
    """``log|Z| + C|Z|``, pole at the origin."""

    def f(zs):
        r2 = _norm_sq(zs)
        return 0.5 * r2.log() + C * r2.sqrt()

    def guard(points):
        return np.linalg.norm(points, axis=-1) <= SINGULAR_FLOOR

    return CandidateFunction(f"chirka(C={C:g})", n, f, guard, "Z = 0")


def norm_sq(n: int = 2) -> CandidateFunction:
    return CandidateFunction("|Z|^2", n, _norm_sq)


def abs_z1_sq(n: int = 2) -> CandidateFunction:
    return CandidateFunction("|z1|^2", n, lambda zs: (zs[0] * zs[0].conj()).real())


def re_z1(n: int = 2) -> CandidateFunction:
    return CandidateFunction("Re z1", n, lambda zs: zs[0].real())


def lambda0() -> CandidateFunction:
    """``-Im z1 + (Im z1)^2 + (Im z2)^2 - (Re z1)^2/2 - (Re z2)^2/2`` on ``C^2``."""

    def f(zs):
        x1, y1 = zs[0].real(), zs[0].imag()
        x2, y2 = zs[1].real(), zs[1].imag()
        return -y1 + y1 * y1 + y2 * y2 - 0.5 * x1 * x1 - 0.5 * x2 * x2

    return CandidateFunction("lambda0", 2, f)


def from_expression(source: str, n: int = 2, name=None) -> CandidateFunction:
    """Candidate given by a real-valued closed-form expression in ``z1..zn``."""
    ex = parse(source, n)

    def f(zs):
        env_eval = ex._eval(ex.tree, {f"z{j + 1}": z for j, z in enumerate(zs)},
                            lambda nm, x: getattr(x, {"re": "real", "im": "imag"}.get(nm, nm))())
        return env_eval

    return CandidateFunction(name or source, n, f)


def one_dim(kind: str, C: float = 0.0) -> CandidateFunction:
    """Model functions on ``C``: ``log``, ``loglog``, ``abs`` or ``chirka`` (``log|z| + C|z|``)."""

    def guard(points):
        r = np.abs(points[..., 0])
        if kind == "loglog":
            return (r <= SINGULAR_FLOOR) | (r >= 1.0)
        return r <= SINGULAR_FLOOR

    def f(zs):
        r2 = (zs[0] * zs[0].conj()).real()
        if kind == "log":
            return 0.5 * r2.log()
        if kind == "loglog":
            return -((-0.5) * r2.log()).log()
        if kind == "abs":
            return r2.sqrt()
        if kind == "chirka":
            return 0.5 * r2.log() + C * r2.sqrt()
        raise ValueError(f"unknown model function {kind!r}")

    return CandidateFunction(kind, 1, f, guard, "z = 0")


BUILTIN_CANDIDATES = {
    "loglog": lambda K=0.0, n=2: loglog(n),
    "prop1": lambda K=1.0, n=2: prop1(K, n),
    "prop3": lambda K=1.0, n=2: prop3(K, n),
    "log-z2": lambda K=0.0, n=2: log_z2(),
    "chirka": lambda K=1.0, n=2: chirka(K, n),
    "normsq": lambda K=0.0, n=2: norm_sq(n),
    "lambda0": lambda K=0.0, n=2: lambda0(),
}


def candidate_from_name(name: str, K: float = 1.0, n: int = 2) -> CandidateFunction:
    if name in BUILTIN_CANDIDATES:
        return BUILTIN_CANDIDATES[name](K=K, n=n)
    if name.startswith("expr:"):
        return from_expression(name[5:], n)
    raise KeyError(f"unknown candidate {name!r}; choose from {sorted(BUILTIN_CANDIDATES)} or expr:<source>")
