import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from almostcx.disc import (DiscPolynomial, JetSpec, cauchy_green, center_two_jet, disc_grid,
                           e3_bound_check, exact_jet_disc, map_residual, solve_disc, _transfer,
                           _monomials)
from almostcx.errors import DomainError, LeftDomainError, RadiusTooLargeError, SolverError
from almostcx.structure import example_structure, from_expressions, standard_structure

JET = JetSpec(np.array([0.3 + 0.1j, 0.2 - 0.1j]), np.array([1.0, 2 + 1j]), 0.05)


@pytest.fixture(scope="module")
def example_solution():
    return solve_disc(example_structure(), JET, grid_n=64)


def test_cauchy_green_of_constant_is_conjugate():
    zeta, mask, h = disc_grid(128, 1.0)
    out = cauchy_green(np.ones_like(zeta), 1.0)
    inner = np.abs(zeta) < 0.7
    assert np.max(np.abs(out[inner] - np.conj(zeta[inner]))) < 2e-2


def test_cauchy_green_error_shrinks_with_grid():
    errs = []
    for n in (64, 128):
        zeta, mask, h = disc_grid(n, 1.0)
        f = zeta ** 2
        exact = zeta ** 2 * np.conj(zeta) - zeta
        inner = np.abs(zeta) < 0.7
        errs.append(np.max(np.abs(cauchy_green(f, 1.0)[inner] - exact[inner])))
    assert errs[1] < errs[0]


@settings(max_examples=40, deadline=None)
@given(a=st.integers(0, 5), b=st.integers(0, 5))
def test_transfer_inverts_dbar(a, b):
    # d/dzbar of T[s^a sbar^b] must return the monomial on the unit disc
    deg = 11
    Ain, Bin = _monomials(deg - 1)
    k = int(np.flatnonzero((Ain == a) & (Bin == b))[0])
    cin = np.zeros((Ain.size, 1), complex)
    cin[k] = 1.0
    out = DiscPolynomial(_transfer(deg) @ cin, 1.0, deg)
    s = np.array([0.3 + 0.2j, -0.5j, 0.1])
    _, _, uzb, _ = out.evaluate(s)
    assert np.allclose(uzb[:, 0], s ** a * np.conj(s) ** b, atol=1e-12)


def test_grid_transform_agrees_with_monomial_rule():
    # independent check of the exact rule by midpoint quadrature
    zeta, mask, h = disc_grid(256, 1.0)
    f = zeta * np.conj(zeta) ** 2
    exact = zeta * np.conj(zeta) ** 3 / 3
    inner = np.abs(zeta) < 0.6
    assert np.max(np.abs(cauchy_green(f, 1.0)[inner] - exact[inner])) < 1e-2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_polynomial_derivatives_match_fd(seed):
    rng = np.random.default_rng(seed)
    A, _ = _monomials(4)
    c = rng.normal(size=(A.size, 2)) + 1j * rng.normal(size=(A.size, 2))
    poly = DiscPolynomial(c, 0.5, 4)
    z = np.array([0.1 + 0.05j])
    u, uz, uzb, uzzb = poly.evaluate(z)
    h = 1e-6
    dx = (poly(z + h) - poly(z - h)) / (2 * h)
    dy = (poly(z + 1j * h) - poly(z - 1j * h)) / (2 * h)
    assert np.allclose(uz, 0.5 * (dx - 1j * dy), atol=1e-6 * (1 + np.abs(uz).max()))
    assert np.allclose(uzb, 0.5 * (dx + 1j * dy), atol=1e-6 * (1 + np.abs(uzb).max()))


def test_standard_structure_gives_affine_disc():
    sol = solve_disc(standard_structure(2), JetSpec([0.1, 0.2j], [1.0, 0.5 - 0.5j], 0.3), grid_n=32)
    m = sol.mask
    expect = np.array([0.1, 0.2j]) + sol.zeta[m][:, None] * np.array([1.0, 0.5 - 0.5j])
    assert np.allclose(sol.u[m], expect, atol=1e-14)
    assert sol.iterations <= 2


def test_example_solution_residual_and_jet(example_solution):
    sol = example_solution
    assert sol.residual_sup <= 1e-8
    u0, uz0, _, _ = sol.center_jet()
    assert np.allclose(u0, JET.center, atol=1e-15)
    assert np.allclose(uz0, JET.v, atol=1e-13)


def test_example_second_derivative_identity(example_solution):
    sol = example_solution
    m = sol.mask
    lhs = sol.u_zzb[m][:, 1]
    rhs = sol.u[m][:, 1] * np.abs(sol.u_z[m][:, 0]) ** 2
    assert np.max(np.abs(lhs - rhs)) <= 1e-6 * np.max(np.abs(rhs))


def test_center_two_jet_matches_solver(example_solution):
    _, _, uzb0, uzzb0 = example_solution.center_jet()
    uzb, uzzb = center_two_jet(example_structure(), JET.center, JET.v)
    assert np.allclose(uzb, uzb0, atol=1e-10)
    assert np.allclose(uzzb, uzzb0, atol=1e-6)


def test_e3_bound_holds(example_solution):
    rep = e3_bound_check(example_solution, example_structure())
    assert rep.holds
    assert rep.worst_ratio <= 1.0


def test_fd_derivatives_consistent(example_solution):
    sol = example_solution
    fz, fzb = sol.fd_derivatives()
    inner = np.abs(sol.zeta) < 0.5 * sol.jet.rho
    assert np.max(np.abs(fz[inner] - sol.u_z[inner])) < 1e-2
    assert np.max(np.abs(fzb[inner] - sol.u_zb[inner])) < 1e-2


def test_refinement_in_degree_reduces_residual():
    jet = JetSpec([0.2, 0.1], [1.0, 1.0 + 1j], 0.1)
    with pytest.raises(SolverError):
        solve_disc(example_structure(), jet, grid_n=32, tol=1e-10, degree=3)
    fine = solve_disc(example_structure(), jet, grid_n=32, tol=1e-10, degree=16)
    assert fine.residual_sup <= 1e-10


def test_exact_jet_disc_residual_vanishes_at_center():
    s = example_structure()
    u = exact_jet_disc(0.1 + 0.2j, 0.05 - 0.1j)
    r0 = map_residual(s, u, np.array([0.0]))
    assert np.max(np.abs(r0)) < 1e-15
    r1 = map_residual(s, u, np.array([1e-3, 2e-3]))
    assert np.max(np.abs(r1[1])) / np.max(np.abs(r1[0])) == pytest.approx(2, rel=1e-6)


def test_jet_validation():
    with pytest.raises(ValueError):
        JetSpec([0, 0], [1, 0], 0.0)
    with pytest.raises(ValueError):
        JetSpec([0, 0], [1, 0], 1.5)
    with pytest.raises(ValueError):
        JetSpec([0, 0], [1], 0.1)


def test_dimension_and_domain_errors():
    s = example_structure()
    with pytest.raises(ValueError):
        solve_disc(s, JetSpec([0.0], [1.0], 0.1))
    with pytest.raises(DomainError):
        solve_disc(s, JetSpec([0.0, 0.4], [1.0, 0.0], 0.1))


def test_large_radius_fails_loudly():
    with pytest.raises((LeftDomainError, RadiusTooLargeError, SolverError)):
        solve_disc(example_structure(), JetSpec([0.0, 0.1], [1.0, 1.0], 1.0), grid_n=16)


def test_strong_structure_does_not_converge_silently():
    s = from_expressions([["0", "0.3*conj(z2)"], ["0.3*z1", "0"]],
                         [-1, -1, -0.5, -0.5], [1, 1, 0.5, 0.5])
    try:
        sol = solve_disc(s, JetSpec([0.5, 0.3], [3.0, 3.0], 0.5), grid_n=16)
    except (LeftDomainError, RadiusTooLargeError, SolverError):
        return
    assert sol.residual_sup <= sol.tol


@settings(max_examples=15, deadline=None)
@given(x=st.floats(-0.5, 0.5), y=st.floats(-0.1, 0.1), v2=st.complex_numbers(max_magnitude=3))
def test_solutions_keep_their_jet(x, y, v2):
    jet = JetSpec([complex(x, 0.1), complex(y, -0.05)], [1.0, v2], 0.03)
    sol = solve_disc(example_structure(), jet, grid_n=16)
    u0, uz0, _, _ = sol.center_jet()
    assert np.allclose(uz0, jet.v, atol=1e-12)
    assert sol.residual_sup <= 1e-8
