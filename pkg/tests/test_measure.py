import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from almostcx import measure as m
from almostcx.errors import DomainError


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

def test_density_whole_plane_and_half_plane():
    N, R = 512, 1.0
    h = 2 * R / N
    radii = np.array([0.05, 0.1, 0.4])
    full = m.density_profile(np.ones((N, N)), R, radii)
    assert np.all(np.abs(full - 1) <= 2 * h / radii)
    half = m.density_profile(m.grid_centers(R, N).real > 0, R, radii)
    assert np.all(np.abs(half - 0.5) <= 2 * h / radii)


def annulus_complement_density(r, annuli):
    """Exact area ratio of the complement of the open annuli (a, b) inside |z| < r."""
    removed = sum(max(0.0, min(b, r) ** 2 - a ** 2) for a, b in annuli if a < r)
    return 1 - removed / r ** 2


def test_density_converges_first_order():
    annuli = [(0.1, 0.2), (0.025, 0.05)]
    r = 0.15
    errs = []
    for N in (256, 512, 1024):
        d = np.abs(m.grid_centers(1.0, N))
        mask = np.ones(d.shape, bool)
        for a, b in annuli:
            mask &= ~((d > a) & (d < b))
        errs.append(abs(m.density_profile(mask, 1.0, [r])[0] - annulus_complement_density(r, annuli)))
    assert errs[0] > errs[1] > errs[2]
    assert np.log2(errs[0] / errs[2]) / 2 >= 0.8


def test_sparse_annuli_complement_is_fat():
    R, N = 1.0, 2048
    ns = [1, 4, 9]
    d = np.abs(m.grid_centers(R, N))
    mask = np.ones(d.shape, bool)
    for n in ns:
        mask &= ~((d > 2.0 ** (-n - 1)) & (d < 2.0 ** -n))
    annuli = [(2.0 ** (-n - 1), 2.0 ** -n) for n in ns]
    radii = np.array([2.0 ** -k for k in (2, 5, 6)])
    prof = m.density_profile(mask, R, radii)
    exact = np.array([annulus_complement_density(r, annuli) for r in radii])
    assert np.all(np.abs(prof - exact) <= 2 * (2 * R / N) / radii)
    assert np.all(prof[1:] >= 0.99)


def test_density_unresolvable_radius():
    with pytest.raises(DomainError):
        m.density_profile(np.ones((64, 64)), 1.0, [0.01])


# ---------------------------------------------------------------------------
# 1/|z| potentials
# ---------------------------------------------------------------------------

def test_single_atom_potential():
    nu = m.point_mass(1.0, R=2.0, N=64)
    pot = m.conv_inv_abs(nu)
    z = nu.centers()
    iy, ix = np.unravel_index(np.argmax(nu.values), nu.values.shape)
    c = z[iy, ix]
    off = np.ones(z.shape, bool)
    off[iy, ix] = False
    assert np.allclose(pot[off], 1 / np.abs(z[off] - c), rtol=1e-10)


def test_uniform_disc_potential_at_origin():
    nu = m.uniform_disc(1.0, 1024)
    assert m.conv_inv_abs_at(nu, 0.0)[0] == pytest.approx(2.0, rel=1e-2)


def test_circle_measure_eps_set_is_fat_inside():
    nu = m.circle_measure(1e-2, 2e-2, 1024)
    E1 = m.eps_set(nu, 1.0)
    radii = np.array([1e-3, 8e-4, 6.4e-4])
    assert np.all(m.density_profile(E1, nu.R, radii) >= 0.99)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_potential_monotone_in_measure(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, (16, 16)) * (rng.uniform(size=(16, 16)) < 0.3)
    b = a + rng.uniform(0, 1, (16, 16)) * (rng.uniform(size=(16, 16)) < 0.3)
    pa = m.conv_inv_abs(m.GridMeasure(1.0, a))
    pb = m.conv_inv_abs(m.GridMeasure(1.0, b))
    assert np.all(pb >= pa - 1e-12 * np.max(pb))


def test_far_field_trivial_bound():
    rng = np.random.default_rng(3)
    nu = m.GridMeasure(1.0, rng.uniform(0, 1, (64, 64)) ** 4)
    pts = rng.uniform(-0.5, 0.5, 40) + 1j * rng.uniform(-0.5, 0.5, 40)
    far = m.far_field_part(nu, pts)
    assert np.all(far <= nu.total_mass / (2 * np.abs(pts)) * (1 + 1e-12))


def test_fat_witness_for_zero_measure():
    fs = m.build_fat_witness(m.GridMeasure(1.0, np.zeros((256, 256))))
    assert fs.mask.all() and np.all(fs.annulus_sup == 0) and fs.is_fat


def test_fat_witness_for_uniform_disc():
    fs = m.build_fat_witness(m.uniform_disc(1.0, 1024))
    eps = 1.0 / np.arange(1, fs.annulus_sup.size + 1)
    assert np.all(fs.annulus_sup <= eps)
    assert fs.is_fat


def test_fat_witness_refusals():
    with pytest.raises(ValueError, match="atom"):
        m.build_fat_witness(m.point_mass(0, R=1.0, N=64))
    with pytest.raises(ValueError, match="r_"):
        m.build_fat_witness(m.uniform_disc(1.0, 64), radii=[0.5, 0.3])


# ---------------------------------------------------------------------------
# the 1/z^2 transform
# ---------------------------------------------------------------------------

def test_pv_of_zero():
    assert np.all(m.pv_conv_z2(m.GridMeasure(1.0, np.zeros((32, 32)), "density")) == 0)


def test_pv_of_disc_outside_support():
    psi = m.GridMeasure.from_density(lambda z: (np.abs(z) < 1).astype(float), 1.2, 512, mode="density")
    for z in (3.0, 3j, -2 + 2j):
        assert m.pv_conv_z2_at(psi, z)[0] == pytest.approx(-1 / z ** 2, rel=2e-2)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 6), a=st.floats(-2, 2))
def test_pv_linear_and_reflection_symmetric(seed, a):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    q = rng.normal(size=(32, 32))
    T = lambda v: m.pv_conv_z2(m.GridMeasure(1.0, v, "density"))
    assert np.allclose(T(p + a * q), T(p) + a * T(q), atol=1e-10)
    # conj(psi(tbar)) is mapped to conj(T psi (zbar)); zbar flips the row index
    assert np.allclose(T(np.conj(p[::-1])), np.conj(T(p)[::-1]), atol=1e-10)


def test_weak_l1_products_bounded():
    psi = m.gaussian_bump(1.0, 512, sigma=0.01, mode="density")
    w = m.weak_l1_table(psi)
    live = w.t <= 100
    # far from a unit mass |T psi| ~ 1/(pi |z|^2), so m(t) t -> |psi|_1
    assert np.allclose(w.product[live] / w.norm, 1.0, atol=0.05)
    assert w.C_emp <= 1.05


def test_dyadic_levels_single_constant():
    psi = m.gaussian_bump(1.0, 512, sigma=0.01, mode="density")
    C = m.dyadic_level_constants(psi)
    assert sorted(C) == list(range(4, 11))
    assert max(C.values()) <= 1.0


# ---------------------------------------------------------------------------
# divergence over sets of positive density
# ---------------------------------------------------------------------------

def test_divergence_annulus_integrals_closed_form():
    tab = m.lemma_a3_divergence(delta=1.0, K=20)
    eta = np.sqrt(1 / (2 * np.pi))
    oracle = [integrate.quad(lambda s: 2 * np.pi / s, k * abs(np.log(eta)), (k + 1) * abs(np.log(eta)))[0]
              for k in tab.k]
    assert np.allclose(tab.integrals, 2 * np.pi * np.log1p(1 / tab.k), rtol=1e-2)
    assert np.allclose(tab.integrals, oracle, rtol=1e-2)
    assert tab.truncated_at is None


def test_divergence_partial_sum_growth():
    tab = m.lemma_a3_divergence(delta=1.0, K=64)
    const = 1.0 / (2 * abs(np.log(tab.eta)))
    assert tab.bound_sums[-1] / np.log(64) == pytest.approx(const, rel=0.2)
    assert np.all(tab.partial_sums >= tab.bound_sums)


def test_divergence_invalid_delta():
    with pytest.raises(ValueError, match="invalid"):
        m.lemma_a3_divergence(delta=2 * np.pi)


def test_divergence_truncates_on_thin_set():
    # a sector of opening 0.5 has area 0.25 r^2, below delta r^2
    sector = lambda z: np.abs(np.angle(z)) < 0.25
    tab = m.lemma_a3_divergence(delta=1.0, F=sector, K=10)
    assert tab.truncated_at == 1 and tab.k.size == 0


# ---------------------------------------------------------------------------
# sparse annuli
# ---------------------------------------------------------------------------

def test_sparse_annuli_masses_and_tail():
    n = [j ** 4 for j in range(1, 60)]
    rep = m.remark1_density(n)
    assert np.allclose(rep.mass_closed, rep.mass_quad, rtol=1e-10)
    total = rep.l1_norm
    remaining = total - rep.partial_sums
    assert np.all(remaining[:-1] <= rep.tail_bound[:-1] * (1 + 1e-12))
    assert np.all(remaining[:-1] >= 0.95 * rep.tail_bound[:-1])
    assert np.allclose(rep.sup_scan, rep.sup_closed, rtol=1e-2)


def test_sparse_annuli_empty_and_grid():
    rep = m.remark1_density([])
    assert rep.l1_norm == 0 and rep.grid is None
    rep = m.remark1_density([2, 5], N=512)
    assert rep.grid.total_mass == pytest.approx(rep.l1_norm, rel=5e-2)


def test_sparse_annuli_need_increasing_sequence():
    with pytest.raises(ValueError):
        m.remark1_density([4, 2])
