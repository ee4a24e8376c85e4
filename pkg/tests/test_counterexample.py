import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from almostcx import candidates as cands
from almostcx import counterexample as cx
from almostcx.disc import JetSpec, solve_disc
from almostcx.errors import DomainError
from almostcx.psh import e2_terms
from almostcx.structure import example_structure

LOG = cands.from_expression("log(abs(z2))")
LOG_PLUS = cands.from_expression("log(abs(z2)) + 10*abs(z1)**2")
SQ = cands.from_expression("abs(z2)**2")


# ---------------------------------------------------------------------------
# the four-term split
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("r,t", [(0.1, 0.3), (1e-3, -2.0), (1e-6, 5e-5)])
def test_log_terms(r, t):
    e = cx.e4_terms(LOG, 0.0, r, t)
    assert e.A == pytest.approx(-t / r, rel=1e-12)
    assert e.B == pytest.approx(0.0, abs=1e-9 / r)
    assert e.C1 == pytest.approx(1.0, rel=1e-12)
    assert e.C2 == 0.0
    assert e.total == pytest.approx(1 - t / r, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("z1,z2,t", [(0.1, 0.2 - 0.1j, 1 + 1j), (-0.3j, 0.05, -0.4j), (0.0, 1e-3j, 2.0)])
def test_quadratic_terms(z1, z2, t):
    e = cx.e4_terms(SQ, z1, z2, t)
    assert e.A == pytest.approx(0.0, abs=1e-15)
    assert e.B == pytest.approx(abs(t) ** 2 + abs(z2) ** 2, rel=1e-12)
    assert e.C1 == pytest.approx(2 * abs(z2) ** 2, rel=1e-12)
    assert e.C2 == pytest.approx(0.0, abs=1e-15)


def test_zero_t_reduces_to_b_c():
    lam = cands.from_expression("re(z1)**2*abs(z2)**2 + im(z1*z2)")
    e = cx.e4_terms(lam, 0.2 + 0.1j, 0.1 - 0.3j, 0.0)
    d = lam.derivatives(np.array([[0.2 + 0.1j, 0.1 - 0.3j]]))
    assert e.A == 0.0
    assert e.B == pytest.approx(d.mixed[0, 1, 1].real * 0.1, rel=1e-12)
    assert e.total == pytest.approx(e.B + e.C1 + e.C2)


def test_zero_z2_refused():
    with pytest.raises(DomainError):
        cx.e4_terms(SQ, 0.0, 0.0, 1.0)


CORPUS_CANDS = [LOG, LOG_PLUS, SQ, cands.from_expression("3*log(abs(z2)) + re(z2) + re(z1)*im(z2)"),
                cands.from_expression("log(abs(z2)) - log(abs(log(abs(z2)))) + abs(z1)**2")]


@settings(max_examples=60, deadline=None)
@given(k=st.integers(0, len(CORPUS_CANDS) - 1), z1=st.complex_numbers(max_magnitude=0.3),
       z2=st.complex_numbers(min_magnitude=1e-6, max_magnitude=0.3),
       t1=st.complex_numbers(max_magnitude=5), t2=st.complex_numbers(max_magnitude=5),
       a=st.floats(-3, 3), phi=st.floats(0, 2 * np.pi))
def test_term_symmetries(k, z1, z2, t1, t2, a, phi):
    lam = CORPUS_CANDS[k]
    e1, e2, e12 = (cx.e4_terms(lam, z1, z2, t) for t in (t1, t2, t1 + a * t2))
    scale = 1 + abs(e1.A) + abs(a * e2.A)
    assert e12.A == pytest.approx(e1.A + a * e2.A, abs=1e-12 * scale)
    rot = cx.e4_terms(lam, z1, z2, np.exp(1j * phi) * t1)
    assert rot.B == pytest.approx(e1.B, rel=1e-12, abs=1e-300)
    assert (e1.C1, e1.C2) == (e2.C1, e2.C2) == (e12.C1, e12.C2)


def e4_corpus(count=100, seed=0):
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        lam = CORPUS_CANDS[i % len(CORPUS_CANDS)]
        z1 = complex(*rng.uniform(-0.3, 0.3, 2))
        r = 10 ** rng.uniform(-6, -2)
        z2 = r * np.exp(1j * rng.uniform(0, 2 * np.pi))
        t = rng.uniform(0.1, 8) * r * abs(np.log(r)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        cases.append((lam, z1, z2, t))
    return cases


def test_e4_matches_solved_disc():
    s = example_structure()
    worst = 0.0
    for lam, z1, z2, t in e4_corpus():
        r = abs(z2)
        sol = solve_disc(s, JetSpec([z1, z2], [1.0, t], min(0.05, 0.1 * r)), grid_n=16, tol=1e-8)
        worst = max(worst, abs(e2_terms(lam, sol).total - cx.e4_terms(lam, z1, z2, t).total))
    assert worst <= 1e-3


# ---------------------------------------------------------------------------
# the attack
# ---------------------------------------------------------------------------

def test_attack_closed_form():
    rep = cx.run_attack(LOG, cx.AttackSpec(K2=8.0, per_decade=2))
    for row in rep.rows:
        assert row.total == pytest.approx(1 - 8 * abs(np.log(row.abs_z2)), abs=1e-10 * abs(np.log(row.abs_z2)))
        assert row.verdict == "success"
    assert rep.all_success


def test_attack_with_z1_term():
    rep = cx.run_attack(LOG_PLUS, cx.AttackSpec(K2=8.0))
    for row in rep.rows:
        assert row.C2 == pytest.approx(10.0, rel=1e-12)
        assert row.total == pytest.approx(11 - 8 * abs(np.log(row.abs_z2)), rel=1e-9)
    totals = [r.total for r in rep.rows]
    assert np.all(np.diff(totals) < 0)
    assert rep.rows[-1].verdict == "success"


def test_attack_negative_control():
    spec = cx.AttackSpec(K2=8.0)
    rep = cx.run_attack(SQ, spec)
    assert not rep.success
    for row in rep.rows:
        r = row.abs_z2
        tt = 8 * r * abs(np.log(r))
        assert row.total == pytest.approx(tt ** 2 + 3 * r * r, rel=1e-12)
        assert row.total > 0


def test_attack_mask():
    spec = cx.AttackSpec(K2=8.0, mask=lambda z2: np.abs(z2) < 1e-5)
    rep = cx.run_attack(LOG, spec)
    verdicts = {r.abs_z2: r.verdict for r in rep.rows}
    assert verdicts[1e-2] == "masked"
    assert verdicts[1e-8] == "success"


def test_attack_spec_validation():
    with pytest.raises(ValueError):
        cx.AttackSpec(n_angles=4)
    with pytest.raises(ValueError):
        cx.AttackSpec(r_min=1e-2, r_max=1e-3)
    # every interval of length pi/4 holds at least 8 grid angles
    assert np.diff(cx.AttackSpec().angles())[0] <= np.pi / 4 / 8 + 1e-15


# ---------------------------------------------------------------------------
# Lelong decomposition and decay hypotheses
# ---------------------------------------------------------------------------

def test_lelong_pure_log():
    dec = cx.lelong_fit(LOG)
    assert dec.a == pytest.approx(1.0, abs=1e-12)
    pts = np.array([[0.1, 1e-3 + 1e-3j], [0.0, 0.01j]])
    assert np.max(np.abs(dec.mu(pts))) < 1e-10


def test_lelong_with_linear_part():
    lam = cands.from_expression("3*log(abs(z2)) + re(z2)")
    dec = cx.lelong_fit(lam)
    assert dec.a == pytest.approx(3.0, abs=1e-9)
    pts = np.array([[0.0, 1e-3 + 2e-3j], [0.0, -0.005]])
    assert np.allclose(dec.mu(pts), pts[:, 1].real, atol=1e-8)


def test_lelong_loglog_term_vanishes_in_the_limit():
    lam = cands.from_expression("log(abs(z2)) - log(abs(log(abs(z2))))")
    errs = []
    for hi in (1e-2, 1e-4, 1e-6):
        dec = cx.lelong_fit(lam, radii=np.geomspace(hi / 100, hi, 9))
        errs.append(abs(dec.a - 1))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.1


def test_lelong_invariant_under_bounded_smooth_part():
    bump_ = cands.from_expression("2*log(abs(z2)) + re(z2) + abs(z2)**2 + im(z2)")
    base = cands.from_expression("2*log(abs(z2))")
    diffs = []
    for hi in (1e-1, 1e-2, 1e-3):
        radii = np.geomspace(hi / 10, hi, 7)
        diffs.append(abs(cx.lelong_fit(bump_, radii=radii).a - cx.lelong_fit(base, radii=radii).a))
    assert diffs[0] >= diffs[1] >= diffs[2]
    assert diffs[2] < 1e-5


def test_lelong_refuses_superharmonic():
    with pytest.raises(ValueError, match="not subharmonic"):
        cx.lelong_fit(cands.from_expression("-log(abs(z2))"))


def test_H_zero():
    rep = cx.check_H(cands.from_expression("0*re(z1)"))
    assert np.all(rep.sup_first == 0) and np.all(rep.sup_second == 0)
    assert rep.verdict == "H-satisfied"


def test_H_linear():
    rep = cx.check_H(cands.from_expression("re(z2)"))
    assert np.allclose(rep.sup_first, rep.decades / 2, rtol=1e-12)
    assert np.all(rep.sup_second < 1e-15)
    assert rep.verdict == "H-satisfied"


def test_H_loglog():
    rep = cx.check_H(cands.from_expression("-log(abs(log(abs(z2))))"))
    assert np.allclose(rep.sup_first, 1 / (2 * np.abs(np.log(rep.decades))), rtol=1e-9)
    assert np.all(np.diff(rep.sup_first) < 0)
    assert rep.verdict == "H-satisfied"


def test_H_fails_for_log():
    assert cx.check_H(LOG).verdict == "H-violated"


def test_H_plus_ratio():
    rep = cx.check_H(cands.from_expression("0*re(z1)"), lam=LOG_PLUS)
    assert np.allclose(rep.hplus_ratio, 10 / np.abs(np.log(rep.decades)), rtol=1e-9)


# ---------------------------------------------------------------------------
# smoothing in z1
# ---------------------------------------------------------------------------

PTS = np.array([[0.2 + 0.1j, 0.05 - 0.02j], [-0.1j, 0.3]])


def test_smoothing_keeps_z1_independent_functions():
    lam = cands.from_expression("abs(z2)**2 + re(z2)")
    sm = cx.smooth_in_z1(lam, 0.05)
    assert np.allclose(sm(PTS), lam(PTS), atol=1e-10)


def test_smoothing_keeps_affine_functions():
    lam = cands.from_expression("re(z1) + 2*im(z1)")
    assert np.allclose(cx.smooth_in_z1(lam, 0.1)(PTS), lam(PTS), atol=1e-10)


def _moment_oracle(width):
    # independent Cartesian quadrature of the bump exp(-1/(1-|w|^2/width^2))
    def phi(y, x):
        q = (x * x + y * y) / width ** 2
        return np.exp(-1 / (1 - q)) if q < 1 else 0.0

    def lim(x):
        return np.sqrt(max(width * width - x * x, 0.0))

    opts = dict(epsabs=0, epsrel=1e-10)
    mass = integrate.dblquad(phi, -width, width, lambda x: -lim(x), lim, **opts)[0]
    mom = integrate.dblquad(lambda y, x: (x * x + y * y) * phi(y, x), -width, width,
                            lambda x: -lim(x), lim, **opts)[0]
    return mom / mass


def test_smoothing_adds_second_moment():
    w = 0.1
    m2 = _moment_oracle(w)
    assert cx.bump_second_moment(w) == pytest.approx(m2, rel=1e-7)
    lam = cands.from_expression("abs(z1)**2")
    assert np.allclose(cx.smooth_in_z1(lam, w)(PTS), np.abs(PTS[:, 0]) ** 2 + m2, rtol=1e-6)


def test_smoothing_domain_too_narrow():
    with pytest.raises(DomainError, match="domain too narrow"):
        cx.smooth_in_z1(LOG, 0.5, z1_halfwidth=0.4)
