import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from almostcx import candidates as cands
from almostcx import counterexample as cx
from almostcx import psh
from almostcx.disc import JetSpec, solve_disc
from almostcx.errors import DomainError, NormalizationError, SingularLocusError
from almostcx.structure import (build_normalization, example_structure, pushforward_structure,
                                standard_structure, toy_normalizable)


# ---------------------------------------------------------------------------
# one-variable models
# ---------------------------------------------------------------------------

def test_model_values():
    v = psh.model_laplacians(np.exp(-1.0))
    assert v["loglog"] == pytest.approx(np.e ** 2 / 4, rel=1e-14)
    assert psh.model_laplacians(0.5j)["abs"] == pytest.approx(0.5, rel=1e-14)


def test_model_fd_at_tenth():
    cl, fd = psh.model_laplacians(0.1), psh.model_laplacians_fd(0.1)
    assert fd["loglog"] == pytest.approx(cl["loglog"], rel=1e-6)
    assert fd["abs"] == pytest.approx(cl["abs"], rel=1e-6)


@pytest.mark.parametrize("z", [0, 1, 1.5j])
def test_model_domain(z):
    with pytest.raises(DomainError):
        psh.model_laplacians(z)


@settings(max_examples=50, deadline=None)
@given(r=st.floats(1e-4, 0.4), s=st.floats(0.1, 2.0), th=st.floats(0, 6.3))
def test_abs_scale_consistency(r, s, th):
    a = psh.model_laplacians(r * np.exp(1j * th))["abs"]
    b = psh.model_laplacians(s * r * np.exp(1j * th))["abs"] if s * r < 1 else a / s
    assert b * s == pytest.approx(a, rel=1e-12)


def small_op():
    return psh.PerturbedOperator(a1=lambda z: 0.3 * z, a2=lambda z: 0.2 * np.abs(z), b1=lambda z: 0.5 + 0 * z)


def test_pure_laplacian_kills_log():
    op = psh.PerturbedOperator(lambda z: 0 * z, lambda z: 0 * z, lambda z: 0 * z)
    z = np.array([0.1, 0.3j, -0.02 + 0.01j])
    assert np.max(np.abs(psh.perturbed_apply(op, cands.one_dim("log"), z))) < 1e-12


def test_loglog_positive_near_zero():
    op = small_op()
    assert op.check_vanishing()
    r0 = psh.positivity_radius(op, cands.one_dim("loglog"), r_max=0.3)
    assert r0 > 1e-3


def test_minimal_chirka_constant():
    op = small_op()
    C = psh.minimal_chirka_constant(op, r_max=0.1)
    assert 0 < C < np.inf
    r, z = np.geomspace(1e-8, 0.1, 50), None
    z = (r[:, None] * np.exp(2j * np.pi * np.arange(64) / 64)[None]).ravel()
    vals = psh.perturbed_apply(op, cands.one_dim("chirka", C), z)
    assert np.min(vals) >= -1e-9 * np.max(np.abs(vals))
    smaller = psh.perturbed_apply(op, cands.one_dim("chirka", 0.5 * C), z)
    assert np.min(smaller) < 0


def test_non_real_operator_refused():
    op = psh.PerturbedOperator(lambda z: 0 * z, lambda z: 0 * z, lambda z: 1 + 0 * z, b2=lambda z: 0 * z)
    with pytest.raises(ValueError):
        psh.perturbed_apply(op, cands.one_dim("abs"), np.array([0.1j]))


# ---------------------------------------------------------------------------
# Hessian bound
# ---------------------------------------------------------------------------

def test_ll_bound_one_dim():
    hb = psh.ll_hessian_bound(np.array([0.1]))
    assert hb.holds
    assert hb.bound[0] == pytest.approx(1 / (0.01 * np.log(0.1) ** 2))


def test_ll_bound_three_dims_against_eigensolve():
    rng = np.random.default_rng(4)
    d = rng.normal(size=3) + 1j * rng.normal(size=3)
    zp = 0.05 * d / np.linalg.norm(d)
    hb = psh.ll_hessian_bound(zp)
    # oracle: mixed Hessian of -log|log|Z'|| written out by hand
    r2 = 0.05 ** 2
    L = np.log(r2) / 2
    H = -(np.eye(3) / (2 * L * r2) - np.outer(np.conj(zp), zp) / (2 * L * r2 * r2)
          - np.outer(np.conj(zp), zp) / (4 * L * L * r2 * r2))
    lo = np.linalg.eigvalsh(4 * H.T)[0]
    assert hb.min_eig[0] == pytest.approx(lo, rel=1e-9)
    assert hb.holds


def test_ll_bound_range():
    with pytest.raises(SingularLocusError):
        psh.ll_hessian_bound(np.array([0.5]))


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 3), logr=st.floats(np.log(1e-6), np.log(1e-1)), seed=st.integers(0, 10 ** 6))
def test_ll_bound_property(m, logr, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=m) + 1j * rng.normal(size=m)
    assert psh.ll_hessian_bound(np.exp(logr) * d / np.linalg.norm(d)).holds


# ---------------------------------------------------------------------------
# terms along discs
# ---------------------------------------------------------------------------

def test_e2_quadratic_on_flat_line():
    sol = solve_disc(standard_structure(2), JetSpec([0, 0], [1, 0], 0.5), grid_n=16)
    t = psh.e2_terms(cands.abs_z1_sq(), sol)
    assert (t["I"], t["II"], t["III"]) == pytest.approx((1.0, 0.0, 0.0), abs=1e-14)


def test_e2_linear_candidate():
    sol = solve_disc(example_structure(), JetSpec([0.2, 0.1 + 0.05j], [1, 1 - 1j], 0.05), grid_n=16)
    t = psh.e2_terms(cands.re_z1(), sol)
    uzzb = sol.center_jet()[3]
    assert t["I"] == 0 and t["II"] == 0
    assert t["III"] == pytest.approx(uzzb[0].real, abs=1e-15)


def test_e2_loglog_matches_fd():
    sol = solve_disc(example_structure(), JetSpec([0.1, 0.01], [1, 0.5 + 0.5j], 0.002), grid_n=16)
    t = psh.e2_terms(cands.loglog(2), sol)
    fd = psh.fd_disc_laplacian(cands.loglog(2), sol)
    assert t.total == pytest.approx(fd, rel=1e-3)


def test_e2_boundary_ring_refused():
    sol = solve_disc(example_structure(), JetSpec([0.1, 0.01], [1, 0.5], 0.01), grid_n=16)
    with pytest.raises(DomainError):
        psh.e2_terms(cands.loglog(2), sol, zeta0=0.0099)


def test_flat_structure_matches_hessian_test():
    rng = np.random.default_rng(7)
    lam = cands.from_expression("abs(z1)**2 - 0.5*abs(z2)**2 + re(z1*z2)")
    jets = []
    for _ in range(200):
        c = rng.uniform(-0.3, 0.3, 2) + 1j * rng.uniform(-0.3, 0.3, 2)
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        jets.append(JetSpec(c, v, 0.05))
    rep = psh.certify_psh_on_discs(lam, standard_structure(2), jets, grid_n=8, slack=0.0)
    for rec in rep.records:
        M = lam.derivatives(rec.jet.center[None]).mixed[0]
        form = np.real(rec.jet.v @ M @ np.conj(rec.jet.v))
        assert rec.terms["III"] == pytest.approx(0.0, abs=1e-14)
        assert rec.terms.total == pytest.approx(form, abs=1e-10)
        assert (rec.verdict == "pass") == (form >= 0)
    assert rep.violations and not rep.failures


def test_norm_sq_flat_all_pass():
    jets = psh.sample_axis_jets(2, 20, 0.1, seed=3)
    rep = psh.certify_psh_on_discs(cands.norm_sq(2), standard_structure(2), jets, grid_n=8)
    assert rep.passed
    for rec in rep.records:
        assert rec.terms.total >= np.sum(np.abs(rec.jet.v) ** 2) - 1e-12


def test_log_z2_attack_jets_violate():
    s = example_structure()
    lam = cands.log_z2()
    jets = []
    for r in (1e-2, 1e-3, 1e-4):
        c = cx.e4_coefficients(lam, 0.0, np.array([r]))[0]
        t = cx.attack_t(c, r, 8.0)[0]
        jets.append(JetSpec([0.0, r], [1.0, t], 0.1 * r))
    rep = psh.certify_psh_on_discs(lam, s, jets, grid_n=8, slack=1e-6)
    assert len(rep.violations) == 3


def test_solver_failures_recorded_per_jet():
    jets = [JetSpec([0.0, 0.01], [1.0, 0.0], 0.01), JetSpec([0.0, 0.3], [1.0, 30.0], 1.0)]
    rep = psh.certify_psh_on_discs(cands.norm_sq(2), example_structure(), jets, grid_n=8)
    assert [r.verdict for r in rep.records] == ["pass", "error"]
    assert rep.rows()[1]["total"] == "nan"


# ---------------------------------------------------------------------------
# constants and the inequality chain
# ---------------------------------------------------------------------------

def test_constants_nested_sampling_monotone():
    s = example_structure()
    a = psh.estimate_constants(s, samples=128)
    b = psh.estimate_constants(s, samples=512)
    assert b.C >= 0.99 * a.C
    assert b.c_grad == pytest.approx(1.0, rel=1e-6)
    assert b.c_hess < 1e-6
    assert b.C == pytest.approx(psh.SAFETY_FACTOR * max(b.c_grad, b.c_hess))


def test_chain_zero_constant_holds_everywhere():
    cert = psh.certify_prop1_inequality(0.0, 0.0 + 1.0)
    assert cert.full_holds and cert.slack_holds


def test_chain_slack_holds_c1_k5():
    cert = psh.certify_prop1_inequality(1.0, 5.0, r_range=(1e-12, 1e-2))
    assert cert.slack_holds
    assert cert.grid_shape == (50, 50, 20)


def test_chain_eps_zero_row():
    cert = psh.certify_prop1_inequality(1.0, 5.0)
    assert cert.r_max_eps0 > 0
    r = np.geomspace(1e-12, cert.r_max_eps0, 200)
    tau = np.linspace(0, 1, 11)[:, None]
    assert np.all(psh.prop1_full(1.0, 5.0, 0.0, tau, r) >= 0)
    assert cert.r_max <= cert.r_max_eps0


def test_chain_errors():
    with pytest.raises(ValueError, match="constant too small"):
        psh.certify_prop1_inequality(1.0, 4.0)
    with pytest.raises(ValueError, match="empty admissible r-range"):
        psh.certify_prop1_inequality(1.0, 5.0, r_range=(1e-2, 1e-3))


@settings(max_examples=40, deadline=None)
@given(C=st.floats(0.1, 3.0), k1=st.floats(0.01, 20.0), dk=st.floats(0.0, 50.0))
def test_slack_certificate_monotone_in_K(C, k1, dk):
    K1 = 4 * C * C + k1
    a = psh.certify_prop1_inequality(C, K1, n_r=8)
    b = psh.certify_prop1_inequality(C, K1 + dk, n_r=8)
    assert (not a.slack_holds) or b.slack_holds


@pytest.mark.xfail(strict=True, reason="the -CK tau^2 term shrinks the full-form radius as K grows")
def test_full_form_radius_monotone_in_K():
    a = psh.certify_prop1_inequality(1.0, 5.0)
    b = psh.certify_prop1_inequality(1.0, 10.0)
    assert b.r_max >= a.r_max


# ---------------------------------------------------------------------------
# normalized structures
# ---------------------------------------------------------------------------

def test_log_tail_flat_k1():
    jets = psh.sample_axis_jets(2, 20, 0.05, seed=5)
    rep = psh.prop3_certify(standard_structure(2), jets, K=1.0, grid_n=8)
    assert rep.K == 1.0 and rep.violations == 0


def test_log_tail_precondition():
    with pytest.raises(NormalizationError):
        psh.prop3_certify(example_structure(), psh.sample_axis_jets(2, 2, 0.05))


@pytest.fixture(scope="module")
def normalized_toy():
    s = toy_normalizable()
    return pushforward_structure(s, build_normalization(s))


def test_log_tail_toy_quantities(normalized_toy):
    jets = psh.sample_axis_jets(2, 12, 0.05, seed=11, rho=0.02)
    coarse = psh.prop3_certify(normalized_toy, jets, grid_n=8, degree=12)
    fine = psh.prop3_certify(normalized_toy, jets, grid_n=8, degree=16)
    assert fine.K is not None and fine.violations == 0
    assert fine.M >= 0.9
    assert fine.fitted_C == pytest.approx(coarse.fitted_C, rel=0.05, abs=1e-6)
