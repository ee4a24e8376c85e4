"""Named, reproducible experiments with CSV outputs and an append-only run log.

An experiment is a JSON document::

    {"schema_version": 1, "name": "attack-demo", "operation": "attack",
     "params": {"candidate": "log-z2", "K2": 8}, "seed": 0}

Every operation returns tables plus per-check verdicts; :func:`run` writes
the tables as CSV under the output root and appends a record to
``runlog.jsonl`` there.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import candidates as cands
from . import counterexample as cx
from . import measure as ml
from . import psh
from .disc import JetSpec, e3_bound_check, solve_disc
from .errors import AlmostCxError, SchemaError
from .structure import (build_normalization, example_jfield, nijenhuis_refined,
                        pushforward_structure, standard_structure, structure_from_config)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUTPUT_ENV = "ALMOSTCX_OUTPUT_ROOT"
RUNLOG = "runlog.jsonl"


def output_root(explicit=None) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ENV, "almostcx-out"))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class Table:
    name: str
    columns: list
    rows: list
    x: Optional[str] = None
    group: tuple = ()


@dataclass
class Result:
    tables: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    extra_files: dict = field(default_factory=dict)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return str(v)


def table_csv(table: Table, seed) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(table.columns) + ["seed"])
    for row in table.rows:
        w.writerow([_fmt(v) for v in row] + [str(seed)])
    return buf.getvalue()


def verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def op_prop0_laplacians(p, rng):
    radii = np.geomspace(p["r_min"], p["r_max"], p["count"])
    theta = rng.uniform(0, 2 * np.pi, radii.size)
    rows, worst = [], 0.0
    for r, th in zip(radii, theta):
        z = r * np.exp(1j * th)
        cl, fd = psh.model_laplacians(z), psh.model_laplacians_fd(z)
        e1 = abs(fd["loglog"] / cl["loglog"] - 1)
        e2 = abs(fd["abs"] / cl["abs"] - 1)
        worst = max(worst, e1, e2)
        rows.append([r, th, cl["loglog"], fd["loglog"], e1, cl["abs"], fd["abs"], e2])
    cols = ["r", "theta", "loglog_closed", "loglog_fd", "loglog_relerr", "abs_closed", "abs_fd", "abs_relerr"]
    return Result([Table("laplacians", cols, rows, x="r")], {"fd-agreement": verdict(worst <= p["rtol"])})


PRINTED_ROWS = lambda x2, y2: np.array([[0, -1, 0, 0], [1, 0, 0, 0],
                                        [-2 * y2, -2 * x2, 0, -1], [-2 * x2, 2 * y2, 1, 0]], float)


def op_part3_matrix(p, rng):
    from .structure import example_structure
    s = example_structure()
    pts = rng.uniform(s.lower, s.upper, size=(p["n_points"], 4))
    rows, worst = [], 0.0
    for x in pts:
        err = float(np.max(np.abs(s.j_at(x) - PRINTED_ROWS(x[2], x[3]))))
        worst = max(worst, err)
        rows.append(list(x) + [err])
    act_rows, act_ok = [], True
    for x in pts[:10]:
        J = s.j_at(x)
        z2 = x[2] + 1j * x[3]
        for name, vec, want in action_checks(z2):
            got = J @ vec
            e = float(np.max(np.abs(got - want)))
            act_ok &= e <= 1e-12
            act_rows.append([x[2], x[3], name, e])
    return Result([Table("matrix", ["x1", "y1", "x2", "y2", "max_abs_err"], rows),
                   Table("actions", ["x2", "y2", "action", "max_abs_err"], act_rows)],
                  {"matrix": verdict(worst <= 1e-12), "actions": verdict(act_ok)})


def _c2(a, b):
    return np.array([a.real, a.imag, b.real, b.imag])


def action_checks(z2):
    """The four actions ``J(1,0), J(i,0), J(0,1), J(0,i)`` as (label, input, expected)."""
    zb = np.conj(z2)
    return [("J(1,0)=(i,-2i z2bar)", _c2(1, 0), _c2(1j, -2j * zb)),
            ("J(i,0)=(-1,-2 z2bar)", _c2(1j, 0), _c2(-1, -2 * zb)),
            ("J(0,1)=(0,i)", _c2(0, 1), _c2(0, 1j)),
            ("J(0,i)=(0,-1)", _c2(0, 1j), _c2(0, -1))]


def op_attack(p, rng):
    lam = cands.candidate_from_name(p["candidate"], K=p.get("K", 1.0))
    mask = load_mask(p["mask"]) if p["mask"] else None
    spec = cx.AttackSpec(K2=p["K2"], n_angles=p["n_angles"], r_max=p["r_max"], r_min=p["r_min"],
                         per_decade=p["per_decade"], mask=mask)
    rep = cx.run_attack(lam, spec)
    rows = [[getattr(r, c) for c in cx.ATTACK_COLUMNS] for r in rep.rows]
    th = spec.angles()
    angle_rows = []
    for r in spec.radii():
        z2 = r * np.exp(1j * th)
        keep = np.ones(th.size, bool) if mask is None else np.asarray(mask(z2), bool)
        if not np.any(keep):
            continue
        try:
            c, b, C1, C2 = cx.e4_coefficients(lam, spec.z1, z2[keep])
        except (AlmostCxError, ValueError, FloatingPointError):
            continue
        t = cx.attack_t(c, r, spec.K2)
        total = 2 * np.real(c * t) + b * (np.abs(t) ** 2 + r * r) + C1 + C2
        label = f"decade{int(np.floor(np.log10(r) + 1e-9))}"
        angle_rows += [[label, r, a, v] for a, v in zip(th[keep], np.broadcast_to(total, th[keep].shape))]
    checks = {"attack-succeeds": verdict(rep.all_success)}
    if p["candidate"] == "log-z2":
        err = max(abs(r.total - (1 - p["K2"] * abs(np.log(r.abs_z2)))) /
                  max(1.0, abs(r.total)) for r in rep.rows)
        checks["closed-form"] = verdict(err <= 1e-10)
    return Result([Table("attack", list(cx.ATTACK_COLUMNS), rows, x="abs_z2"),
                   Table("attack_angles", ["decade", "abs_z2", "theta", "total"], angle_rows,
                         x="theta", group=("decade",))], checks)



def complex_vector(val) -> np.ndarray:
    """Complex vector from ``[[re, im], ...]``, plain numbers or strings like ``"0.1+0.2j"``."""
    out = []
    for x in val:
        if isinstance(x, (list, tuple)):
            if len(x) != 2:
                raise SchemaError(f"complex entries must be [re, im] pairs, got {x!r}")
            out.append(complex(float(x[0]), float(x[1])))
        elif isinstance(x, str):
            out.append(complex(x.replace(" ", "").replace("i", "j")))
        else:
            out.append(complex(x))
    return np.array(out, dtype=complex)


def load_mask(path) -> Callable:
    """Indicator of a fat set saved by ``measure-a1`` (``.npz`` with ``mask`` and ``R``).

    Points outside the saved grid count as excluded.
    """
    with np.load(path) as data:
        mask, R = np.asarray(data["mask"], bool), float(data["R"])
    N = mask.shape[0]
    h = 2 * R / N

    def inside(z):
        z = np.asarray(z, complex)
        ix = np.floor((z.real + R) / h).astype(int)
        iy = np.floor((z.imag + R) / h).astype(int)
        ok = (ix >= 0) & (ix < N) & (iy >= 0) & (iy < N)
        out = np.zeros(z.shape, bool)
        out[ok] = mask[iy[ok], ix[ok]]
        return out

    return inside


def op_solve_disc(p, rng):
    s = structure_from_config(p["structure"])
    jet = JetSpec(complex_vector(p["center"]), complex_vector(p["deriv"]), p["radius"])
    sol = solve_disc(s, jet, grid_n=p["grid"], tol=p["tol"], max_iter=p["max_iter"])
    checks = {"residual": verdict(sol.residual_sup <= p["tol"])}
    if s.name == "example_part3":
        m = sol.mask
        lhs = sol.u_zzb[m][:, 1]
        rhs = sol.u[m][:, 1] * np.abs(sol.u_z[m][:, 0]) ** 2
        rel = float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300))
        checks["second-derivative-identity"] = verdict(rel <= 1e-3)
        checks["iterations"] = verdict(sol.iterations <= 30)
    checks["e3-bound"] = verdict(e3_bound_check(sol, s).holds)
    mid = sol.zeta.shape[0] // 2
    rows = []
    for k in range(sol.zeta.shape[1]):
        if not sol.mask[mid, k]:
            continue
        u = sol.u[mid, k]
        rows.append([sol.zeta[mid, k].real] + [f(c) for c in u for f in (np.real, np.imag)]
                    + [abs(np.linalg.norm(sol.residual[mid, k]))])
    cols = ["zeta_re"] + [f"u{j + 1}_{part}" for j in range(s.n) for part in ("re", "im")] + ["residual"]
    summary = Table("summary", ["iterations", "residual_sup", "last_ratio"],
                    [[sol.iterations, sol.residual_sup, sol.ratios[-1] if sol.ratios else 0.0]])
    res = Result([Table("slice", cols, rows, x="zeta_re"), summary], checks)
    res.extra_files["solution.json"] = solution_json(sol)
    return res


def _pairs(a):
    a = np.asarray(a)
    return np.stack([a.real, a.imag], -1).tolist()


def solution_json(sol) -> str:
    doc = {"center": _pairs(sol.jet.center), "v": _pairs(sol.jet.v), "rho": sol.jet.rho,
           "grid_n": int(sol.zeta.shape[0]), "iterations": sol.iterations,
           "residual_sup": sol.residual_sup, "mask": sol.mask.astype(int).tolist(),
           "u": _pairs(sol.u), "u_zeta": _pairs(sol.u_z), "u_zetabar": _pairs(sol.u_zb),
           "u_zeta_zetabar": _pairs(sol.u_zzb)}
    return json.dumps(doc)


def _jets_from_params(p, n):
    js = p.get("jets")
    if isinstance(js, list):
        return [JetSpec(complex_vector(j["center"]), complex_vector(j["v"]), j.get("rho", 0.02))
                for j in js]
    return psh.sample_axis_jets(n, p["count"], p["radius"], seed=p["seed_jets"], rho=p["rho"])


def _report_rows(records):
    rows = []
    for r in records:
        d = r.row()
        rows.append([d[c] for c in psh.REPORT_COLUMNS])
    return rows


def op_prop1_certify(p, rng):
    s = structure_from_config(p["structure"])
    sc = psh.estimate_constants(s, samples=p["samples"])
    K = 4 * sc.C ** 2 + 1 if p["K"] == "auto" else float(p["K"])
    cert = psh.certify_prop1_inequality(sc.C, K, r_range=(1e-12, p["r_cap"]))
    jets = _jets_from_params(p, s.n)
    rep = psh.certify_psh_on_discs(cands.prop1(K, s.n), s, jets, grid_n=p["grid"])
    summary = Table("certificate", ["C_grad", "C_hess", "C", "K", "r_max", "r_max_eps0", "min_slack"],
                    [[sc.c_grad, sc.c_hess, sc.C, K, cert.r_max, cert.r_max_eps0, cert.min_slack]])
    return Result([Table("report", list(psh.REPORT_COLUMNS), _report_rows(rep.records)), summary],
                  {"slack-inequality": verdict(cert.slack_holds),
                   "discs": verdict(rep.passed)})


def op_certify_psh(p, rng):
    s = structure_from_config(p["structure"])
    if p["candidate"] in ("prop1", "prop3", "chirka") and p["K"] == "auto":
        if p["candidate"] == "prop1":
            K = 4 * psh.estimate_constants(s).C ** 2 + 1
        else:
            K = 1.0
    else:
        K = 1.0 if p["K"] == "auto" else float(p["K"])
    lam = cands.candidate_from_name(p["candidate"], K=K, n=s.n)
    rep = psh.certify_psh_on_discs(lam, s, _jets_from_params(p, s.n), grid_n=p["grid"])
    return Result([Table("report", list(psh.REPORT_COLUMNS), _report_rows(rep.records))],
                  {"no-violations": verdict(rep.passed)})


def op_ll_hessian(p, rng):
    rows, ok = [], True
    for m in range(1, p["max_dim"] + 1):
        count = p["samples"] // p["max_dim"] + (1 if m <= p["samples"] % p["max_dim"] else 0)
        r = np.exp(rng.uniform(np.log(p["r_min"]), np.log(p["r_max"]), count))
        d = rng.normal(size=(count, m)) + 1j * rng.normal(size=(count, m))
        zp = d / np.linalg.norm(d, axis=1, keepdims=True) * r[:, None]
        hb = psh.ll_hessian_bound(zp)
        ok &= hb.holds
        ratio = hb.min_eig / hb.bound
        rows.append([m, count, float(np.min(ratio)), float(np.max(ratio))])
    return Result([Table("hessian", ["dim", "samples", "min_ratio", "max_ratio"], rows, x="dim")],
                  {"bound": verdict(ok)})


def op_nijenhuis(p, rng):
    jf = example_jfield() if p["structure"] in ("example_part3", "builtin:example_part3") \
        else structure_from_config(p["structure"]).jfield()
    pt = np.array(p["point"], float)
    X, Y = np.array(p["X"], float), np.array(p["Y"], float)
    n1, n2, rel = nijenhuis_refined(jf, pt, X, Y, h=p["h"])
    st = standard_structure(len(pt) // 2).jfield()
    n0 = nijenhuis_refined(st, np.zeros(len(pt)), X, Y, h=p["h"])[0]
    rows = [[p["h"]] + list(n1) + [float(np.linalg.norm(n1))],
            [p["h"] / 2] + list(n2) + [float(np.linalg.norm(n2))]]
    cols = ["h"] + [f"N{k}" for k in range(len(pt))] + ["norm"]
    checks = {"standard-zero": verdict(np.max(np.abs(n0)) <= 1e-10),
              "step-stable": verdict(rel <= 0.05)}
    if p.get("expect_nonzero", True):
        checks["nonzero"] = verdict(np.linalg.norm(n2) > 1e-6)
    return Result([Table("nijenhuis", cols, rows, x="h")], checks)


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def op_normalize(p, rng):
    s = structure_from_config(p["structure"])
    m = build_normalization(s)
    rhos = np.geomspace(p["rho_max"], p["rho_max"] / 100, p["n_rho"])
    th = 2 * np.pi * np.arange(16) / 16
    z1 = complex(*p["z1"])
    decay = []
    for rho in rhos:
        pts = np.zeros((th.size, s.n), complex)
        pts[:, 0] = z1
        pts[:, 1] = rho * np.exp(1j * th)
        L = m.lbar_of_coordinates(pts)
        decay.append(float(np.max(np.abs(L[..., :, 1:]))))
    slope = loglog_slope(rhos, decay)
    pf = pushforward_structure(s, m)
    ax = np.zeros((5, s.n), complex)
    ax[:, 0] = np.linspace(-0.5, 0.5, 5) + 0.1j
    dz, dzb = pf.dq_at(ax)
    grad = float(max(np.max(np.abs(dz)), np.max(np.abs(dzb))))
    tables = [Table("decay", ["rho", "max_lbar_Z"], [[r, d] for r, d in zip(rhos, decay)], x="rho"),
              Table("summary", ["slope", "axis_grad_Q", "defining_residual"],
                    [[slope, grad, m.defining_residual(z1)]])]
    checks = {"slope": verdict(abs(slope - 2) <= 0.1), "axis-gradient": verdict(grad <= 1e-6)}
    if p["jets"] > 0:
        jets = psh.sample_axis_jets(s.n, p["jets"], p["radius"], seed=p["seed_jets"], rho=p["rho"],
                                    z1_halfwidth=0.5)
        rep = psh.prop3_certify(pf, jets, grid_n=p["grid"])
        tables.append(Table("prop3", list(psh.REPORT_COLUMNS), _report_rows(rep.records)))
        tables.append(Table("prop3_summary", ["K", "threshold_radius", "fitted_C", "M", "violations"],
                            [[rep.K if rep.K is not None else float("nan"), rep.threshold_radius,
                              rep.fitted_C, rep.M, rep.violations]]))
        checks["prop3"] = verdict(rep.K is not None and rep.violations == 0)
    return Result(tables, checks)


def _measure_from_param(name, N):
    if name in ml.BUILTIN_MEASURES:
        return ml.BUILTIN_MEASURES[name](N)
    return load_measure(name)


def load_measure(path):
    """Measure from a CSV cell dump whose first line is ``# R=<float> mode=<measure|density>``."""
    with open(path) as fh:
        head = fh.readline().lstrip("#").split()
    meta = dict(kv.split("=", 1) for kv in head)
    vals = np.loadtxt(path, delimiter=",", comments="#")
    return ml.GridMeasure(float(meta["R"]), vals, meta.get("mode", "measure"))


def op_measure_a1(p, rng):
    rows, fat_rows, checks, res_files = [], [], {}, {}
    for name in p["measures"]:
        nu = _measure_from_param(name, p["grid"])
        fs = ml.build_fat_witness(nu)
        for r, d in zip(fs.radii, fs.density):
            rows.append([name, r, d])
        for j, sup in enumerate(fs.annulus_sup, start=1):
            fat_rows.append([name, j, sup, 1.0 / j])
        checks[f"fat:{name}"] = verdict(fs.is_fat)
        buf = io.BytesIO()
        np.savez_compressed(buf, mask=fs.mask, R=fs.R)
        res_files[f"fatset-{Path(name).stem}.npz"] = buf.getvalue()
        zs = p["far_field_points"] * np.exp(1j * rng.uniform(0, 2 * np.pi, len(p["far_field_points"])))
        far = ml.far_field_part(nu, zs)
        checks[f"far-field:{name}"] = verdict(bool(np.all(far <= nu.total_mass / (2 * np.abs(zs)) * (1 + 1e-12))))
    return Result([Table("density", ["measure", "radius", "density"], rows, x="radius", group=("measure",)),
                   Table("annulus_sup", ["measure", "j", "sup_z_potential", "eps_j"], fat_rows, x="j",
                         group=("measure",))],
                  checks, res_files)


def op_measure_a2(p, rng):
    psi = ml.gaussian_bump(1.0, p["grid"], mode="density")
    wt = ml.weak_l1_table(psi)
    prod = wt.product / wt.norm
    live = prod[prod > 0]
    shells = ml.gaussian_bump(0.125, p["grid"], mass=10.0, mode="density")
    ck = ml.dyadic_level_constants(shells)
    vals = np.array([v for v in ck.values() if v > 0])
    rows = [[t, m, q] for t, m, q in zip(wt.t, wt.measure, prod)]
    return Result([Table("weak_l1", ["t", "level_measure", "product_over_norm"], rows, x="t"),
                   Table("shells", ["k", "C_k"], [[k, v] for k, v in ck.items()], x="k")],
                  {"weak-l1-factor3": verdict(live.size > 0 and live.max() / live.min() < 3),
                   "shell-constant": verdict(vals.size > 0 and vals.max() / vals.min() < 3)})


def op_measure_a3(p, rng):
    tab = ml.lemma_a3_divergence(delta=p["delta"], K=p["K"])
    exact = 2 * np.pi * np.log1p(1.0 / tab.k)
    rel = np.abs(tab.integrals / exact - 1)
    c = tab.lower_bounds[0]
    grows = tab.partial_sums >= 0.8 * c * np.log(tab.k)
    rows = [[k, i, e, lb, s, bs] for k, i, e, lb, s, bs in
            zip(tab.k, tab.integrals, exact, tab.lower_bounds, tab.partial_sums, tab.bound_sums)]
    ratio = tab.bound_sums[-1] / np.log(tab.k[-1]) / c
    return Result([Table("annuli", ["k", "integral", "closed_form", "lower_bound", "partial_sum",
                                    "bound_partial_sum"], rows, x="k")],
                  {"annulus-closed-form": verdict(rel.max() <= 0.01),
                   "divergence": verdict(bool(np.all(grows))),
                   "harmonic-constant": verdict(abs(ratio - 1) <= 0.2)})


def op_measure_remark1(p, rng):
    n = [j ** 4 for j in range(1, p["J"] + 1)]
    rep = ml.remark1_density(n)
    tail_actual = rep.l1_norm - rep.partial_sums
    with np.errstate(invalid="ignore", divide="ignore"):
        tail_ratio = np.where(rep.tail_bound > 0, tail_actual / rep.tail_bound, 1.0)
    rows = [[int(k), a, b, c, d, s, t, av] for k, a, b, c, d, s, t, av in
            zip(rep.n, rep.mass_closed, rep.mass_quad, rep.sup_closed, rep.sup_scan,
                rep.partial_sums, rep.tail_bound, rep.avoid_density)]
    return Result([Table("annuli", ["n_j", "mass_closed", "mass_quad", "sup_closed", "sup_scan",
                                    "partial_sum", "tail_bound", "avoid_density"], rows, x="n_j")],
                  {"mass": verdict(np.max(np.abs(rep.mass_quad / rep.mass_closed - 1)) <= 0.01),
                   "sup": verdict(np.max(np.abs(rep.sup_scan / rep.sup_closed - 1)) <= 0.01),
                   "tail": verdict(bool(np.all(np.abs(tail_ratio[:-1] - 1) <= 0.05)))})


# name -> (function, schema); a schema maps a key to a default (None = required)
OPERATIONS: dict = {
    "prop0-laplacians": (op_prop0_laplacians, {"r_min": 1e-4, "r_max": 0.5, "count": 20, "rtol": 1e-6}),
    "part3-matrix": (op_part3_matrix, {"n_points": 100}),
    "attack": (op_attack, {"candidate": "log-z2", "K2": 8.0, "K": 1.0, "n_angles": 64, "r_max": 1e-2,
                           "r_min": 1e-8, "per_decade": 1, "mask": ""}),
    "solve-disc": (op_solve_disc, {"structure": "example_part3", "center": None, "deriv": None,
                                   "radius": 0.05, "grid": 256, "tol": 1e-8, "max_iter": 100}),
    "prop1-certify": (op_prop1_certify, {"structure": "example_part3", "K": "auto", "samples": 1024,
                                         "r_cap": 1e-2, "count": 200, "radius": 1e-2, "rho": 0.02,
                                         "seed_jets": 0, "grid": 16, "jets": None}),
    "certify-psh": (op_certify_psh, {"structure": "example_part3", "candidate": "prop1", "K": "auto",
                                     "count": 50, "radius": 1e-2, "rho": 0.02, "seed_jets": 0,
                                     "grid": 16, "jets": None}),
    "ll-hessian": (op_ll_hessian, {"samples": 10000, "max_dim": 3, "r_min": 1e-6, "r_max": 1e-1}),
    "nijenhuis": (op_nijenhuis, {"structure": "example_part3", "point": [0.0, 0.0, 0.5, 0.0],
                                 "X": [1.0, 0.0, 0.0, 0.0], "Y": [0.0, 0.0, 1.0, 0.0], "h": 1e-4,
                                 "expect_nonzero": True}),
    "normalize": (op_normalize, {"structure": "toy_normalizable", "z1": [0.3, 0.2], "rho_max": 0.2,
                                 "n_rho": 9, "jets": 40, "radius": 0.05, "rho": 0.02, "seed_jets": 0,
                                 "grid": 16}),
    "measure-a1": (op_measure_a1, {"measures": ["uniform-disc", "circle-1e-2", "offset-bump"],
                                   "grid": 2048, "far_field_points": [0.05, 0.1, 0.2]}),
    "measure-a2": (op_measure_a2, {"grid": 2048}),
    "measure-a3": (op_measure_a3, {"delta": 1.0, "K": 64}),
    "measure-remark1": (op_measure_remark1, {"J": 8}),
}

BUILTINS = {
    "prop0-laplacians": {"operation": "prop0-laplacians", "params": {}},
    "part3-attack-logz2": {"operation": "attack", "params": {"candidate": "log-z2", "K2": 8.0}},
    "part3-matrix": {"operation": "part3-matrix", "params": {}},
    "disc-example": {"operation": "solve-disc",
                     "params": {"center": [[0.3, 0.1], [0.05, -0.08]], "deriv": [[1.0, 0.0], [0.4, 0.3]],
                                "radius": 0.05, "grid": 256}},
    "prop1-certify": {"operation": "prop1-certify", "params": {"count": 100}},
    "ll-hessian": {"operation": "ll-hessian", "params": {}},
    "nijenhuis-example": {"operation": "nijenhuis", "params": {}},
    "normalize-toy": {"operation": "normalize", "params": {}},
    "measure-a1": {"operation": "measure-a1", "params": {}},
    "measure-a2": {"operation": "measure-a2", "params": {}},
    "measure-a3": {"operation": "measure-a3", "params": {}},
    "measure-remark1": {"operation": "measure-remark1", "params": {}},
}


# ---------------------------------------------------------------------------
# specs and records
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    name: str
    operation: str
    params: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        if not isinstance(doc, dict):
            raise SchemaError("experiment spec must be a JSON object")
        allowed = {"name", "operation", "params", "outputs", "seed", "schema_version"}
        for key in doc:
            if key not in allowed:
                raise SchemaError(f"unknown top-level key {key!r}")
        for key in ("name", "operation"):
            if key not in doc:
                raise SchemaError(f"missing required key {key!r}")
        if doc.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {doc.get('schema_version')!r}")
        if doc["operation"] not in OPERATIONS:
            raise SchemaError(f"unknown operation {doc['operation']!r} (key 'operation')")
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise SchemaError("key 'params' must be an object")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SchemaError("key 'seed' must be an integer")
        spec = cls(str(doc["name"]), doc["operation"], dict(params), dict(doc.get("outputs", {})), seed)
        spec.resolved_params()
        return spec

    def resolved_params(self) -> dict:
        _, schema = OPERATIONS[self.operation]
        out = {}
        for key in self.params:
            if key not in schema and not key.startswith("_"):
                raise SchemaError(f"unknown parameter {key!r} for operation {self.operation!r}")
        for key, default in schema.items():
            if key in self.params:
                val = self.params[key]
                if default is not None and isinstance(default, (int, float)) and not isinstance(default, bool) \
                        and not (isinstance(val, (int, float)) and not isinstance(val, bool)) \
                        and not (key == "K" and val == "auto"):
                    raise SchemaError(f"parameter {key!r} must be numeric")
                out[key] = val
            elif default is None and key not in ("jets",):
                raise SchemaError(f"missing required parameter {key!r}")
            else:
                out[key] = default
        for key, val in self.params.items():
            if key.startswith("_"):
                out[key] = val
        return out

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "name": self.name, "operation": self.operation,
                "params": {k: v for k, v in self.params.items() if not k.startswith("_")},
                "outputs": self.outputs, "seed": self.seed}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def load_spec(path) -> ExperimentSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise SchemaError(f"experiment spec is not valid JSON: {exc}") from None
    return ExperimentSpec.from_dict(doc)


def builtin_spec(name: str, seed: int = 0) -> ExperimentSpec:
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin {name!r}; see list-builtins")
    b = BUILTINS[name]
    return ExperimentSpec(name, b["operation"], dict(b["params"]), {}, seed)


@dataclass
class RunRecord:
    name: str
    operation: str
    spec_hash: str
    seed: int
    started: float
    finished: float
    verdicts: dict
    artifacts: list
    error: str = ""

    @property
    def passed(self) -> bool:
        return not self.error and all(v == "pass" or v.startswith("skipped") for v in self.verdicts.values())


def run(spec: ExperimentSpec, root=None) -> RunRecord:
    """Execute ``spec``, write its tables and append to the run log."""
    func, _ = OPERATIONS[spec.operation]
    params = spec.resolved_params()
    rng = np.random.default_rng(spec.seed)
    outdir = output_root(root) / spec.name
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    artifacts, err = [], ""
    try:
        result = func(params, rng)
        verdicts = dict(result.checks)
        for t in result.tables:
            fname = spec.outputs.get(t.name, f"{t.name}.csv")
            path = outdir / fname
            path.write_text(table_csv(t, spec.seed))
            artifacts.append({"table": t.name, "path": str(path), "x": t.x, "group": list(t.group)})
        for fname, text in result.extra_files.items():
            path = outdir / spec.outputs.get(fname, fname)
            if isinstance(text, bytes):
                path.write_bytes(text)
            else:
                path.write_text(text)
            artifacts.append({"table": None, "path": str(path), "x": None})
    except (AlmostCxError, ValueError, KeyError, OSError) as exc:
        verdicts, err = {"run": "fail"}, f"{type(exc).__name__}: {exc}"
        log.error("experiment %s failed: %s", spec.name, err)
    rec = RunRecord(spec.name, spec.operation, spec.digest(), spec.seed, started, time.time(),
                    verdicts, artifacts, err)
    with open(output_root(root) / RUNLOG, "a") as fh:
        fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
    return rec


def emit_plotdata(record: RunRecord, path) -> Path:
    """Long-format ``series,x,y`` CSV from every tabular artifact with a numeric x column."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "x", "y"])
    for art in record.artifacts:
        if not art.get("x"):
            log.info("skipping non-tabular artifact %s", art.get("path"))
            continue
        with open(art["path"]) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        group_keys = list(art.get("group") or [])
        for col in rows[0]:
            if col in (art["x"], "seed") or col in group_keys or not _numeric(rows[0][col]):
                continue
            for row in rows:
                if not _numeric(row[col]) or not _numeric(row[art["x"]]):
                    continue
                prefix = ":".join(row[g] for g in group_keys)
                series = f"{art['table']}:{prefix + ':' if prefix else ''}{col}"
                w.writerow([series, row[art["x"]], row[col]])
    path.write_text(buf.getvalue())
    return path


def _numeric(s) -> bool:
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False
