import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beltrami.analytic import cutoff, radial_stretching, smooth_random_coefficients
from beltrami.grid import GridFunction, inner_real, lp_norm, make_grid, random_band_limited
from beltrami.operators import (
    BeltramiCoefficients,
    EllipticityError,
    SolveReport,
    apply_beltrami,
    apply_factored_T_star,
    apply_T,
    apply_T_star,
    default_max_iter,
    factor_coefficients,
    invert_id_minus_nuC,
    invert_T_star,
    neumann_invert,
    solve_beltrami,
)
from beltrami.transforms import beurling, conj_beurling

from conftest import disk_indicator, rel_l2

seeds = st.integers(0, 2**32 - 1)


def rand_field(g, rng):
    return GridFunction(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))


# --- coefficients -----------------------------------------------------------


def test_ellipticity_rejected(grid64):
    with pytest.raises(EllipticityError, match="ellipticity violated: k=1"):
        BeltramiCoefficients(grid64.constant(0.6), grid64.constant(0.4), 1.0)
    with pytest.raises(EllipticityError, match="declared k"):
        BeltramiCoefficients(grid64.constant(0.6), grid64.zeros(), 0.5)


def test_declared_k_tolerance(grid64):
    c = BeltramiCoefficients(grid64.constant(0.5 + 5e-13), grid64.zeros(), 0.5)
    assert c.K == pytest.approx(3.0)


# --- apply_beltrami -----------------------------------------------------------


def test_apply_zero_coefficients_is_identity(grid64):
    w = rand_field(grid64, np.random.default_rng(0))
    assert np.array_equal(apply_beltrami(BeltramiCoefficients.zero(grid64), w).values, w.values)


def test_apply_to_zero(grid64):
    c = smooth_random_coefficients(grid64, 0.5)
    assert apply_beltrami(c, grid64.zeros()).max_abs() == 0


def test_apply_to_radial_stretching_derivative():
    """(Id - mu B) dbar f = mu for the closed-form dbar f (central quarter, N = 1024)."""
    g = make_grid(2, 1024)
    s = radial_stretching(2, g)
    coef = BeltramiCoefficients(s.mu, g.zeros(), 1 / 3)
    out = apply_beltrami(coef, s.dbarf)
    assert rel_l2(out.values, s.mu.values, g.central_mask()) <= 0.01


def test_radial_stretching_sampling_error_rate():
    """Sampled |z|^(-1/2) singularity at the origin limits both errors to O(h^(1/2))."""
    apply_err, solve_err = [], []
    for N in (256, 512, 1024):
        g = make_grid(2, N)
        s = radial_stretching(2, g)
        coef = BeltramiCoefficients(s.mu, g.zeros(), 1 / 3)
        m = g.central_mask()
        apply_err.append(rel_l2(apply_beltrami(coef, s.dbarf).values, s.mu.values, m))
        w, _ = solve_beltrami(coef, s.mu)
        solve_err.append(rel_l2(w.values, s.dbarf.values, m))
    for errs in (apply_err, solve_err):
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(np.abs(ratios - math.sqrt(2)) < 0.1)


# --- Neumann ------------------------------------------------------------------


def test_neumann_identity_one_iteration(grid64):
    rhs = rand_field(grid64, np.random.default_rng(1))
    w, rep = neumann_invert(lambda x: x, rhs, 0.0)
    assert rep.iterations == 1 and rep.converged
    assert np.array_equal(w.values, rhs.values)


def test_neumann_contraction_ratio():
    g = make_grid(4, 256)
    coef = BeltramiCoefficients(disk_indicator(g) * 0.5, g.zeros(), 0.5)
    _, rep = solve_beltrami(coef, coef.mu)
    assert rep.converged
    assert np.max(rep.ratios()) <= 0.5 + 1e-6


def test_neumann_radial_stretching():
    """rhs = mu recovers the closed-form dbar f (central quarter, N = 1024)."""
    g = make_grid(2, 1024)
    s = radial_stretching(2, g)
    coef = BeltramiCoefficients(s.mu, g.zeros(), 1 / 3)
    w, rep = solve_beltrami(coef, s.mu)
    assert rep.converged
    want = s.dbarf - s.dbarf.mean()
    assert rel_l2(w.values - w.mean(), want.values, g.central_mask()) <= 0.01


def test_neumann_reports_nonconvergence(grid64):
    coef = BeltramiCoefficients(cutoff(grid64, 1.0) * 0.7, grid64.zeros(), 0.7)
    _, rep = solve_beltrami(coef, coef.mu, tol=1e-14, max_iter=3)
    assert not rep.converged and rep.iterations == 3
    assert rep.residuals[-1] > 1e-14


def test_neumann_rejects_bad_inputs(grid64):
    with pytest.raises(EllipticityError):
        neumann_invert(lambda x: x, grid64.zeros(), 1.0)
    with pytest.raises(ValueError):
        neumann_invert(lambda x: x, grid64.zeros(), 0.5, tol=0)


@pytest.mark.parametrize("k", [0.3, 0.5, 0.7])
def test_iteration_bound(k):
    g = make_grid(4, 128)
    coef = BeltramiCoefficients(disk_indicator(g) * k, g.zeros(), k)
    _, rep = solve_beltrami(coef, coef.mu)
    bound = math.ceil(math.log(1e-10 / lp_norm(coef.mu)) / math.log(k)) + 16
    assert rep.converged and rep.iterations <= bound
    assert default_max_iter(1e-10, lp_norm(coef.mu), k) == bound


def test_report_round_trip():
    rep = SolveReport(3, [1.0, 0.5, 0.1], True, 0.5, 1e-10)
    assert SolveReport.from_dict(rep.to_dict()) == rep
    assert np.allclose(rep.ratios(), [0.5, 0.2])


@given(seeds, st.floats(0.05, 0.95))
def test_contraction_property(seed, k):
    g = make_grid(4, 32)
    rng = np.random.default_rng(seed)
    coef = smooth_random_coefficients(g, k, seed)
    w = rand_field(g, rng)
    lhs = lp_norm(coef.mu * beurling(w) + coef.nu * conj_beurling(w), 2)
    assert lhs <= k * lp_norm(w, 2) + 1e-10


@given(seeds, st.floats(0.1, 0.9))
def test_neumann_geometric_decay(seed, k):
    g = make_grid(4, 32)
    coef = smooth_random_coefficients(g, k, seed)
    rhs = rand_field(g, np.random.default_rng(seed))
    _, rep = solve_beltrami(coef, rhs)
    assert rep.converged
    assert np.all(rep.ratios() <= k * (1 + 1e-6))


# --- T and T* -----------------------------------------------------------------


def test_T_identity_when_mu_zero(grid64):
    rng = np.random.default_rng(2)
    coef = BeltramiCoefficients(grid64.zeros(), cutoff(grid64, 1) * 0.5, 0.5)
    psi = rand_field(grid64, rng)
    assert np.array_equal(apply_T(coef, psi).values, psi.values)
    assert np.array_equal(apply_T_star(coef, psi).values, psi.values)


@given(seeds)
def test_T_adjoint_pairing(seed):
    g = make_grid(4, 64)
    rng = np.random.default_rng(seed)
    coef = smooth_random_coefficients(g, 0.6, seed)
    f, h = random_band_limited(g, rng, 3.0), random_band_limited(g, rng, 3.0)
    assert abs(inner_real(apply_T_star(coef, f), h) - inner_real(f, apply_T(coef, h))) <= 1e-10


def test_T_star_collapse_when_nu_zero(grid64):
    mu = smooth_random_coefficients(grid64, 0.5, 4).mu
    coef = BeltramiCoefficients.from_fields(mu)
    psi = rand_field(grid64, np.random.default_rng(3))
    assert np.allclose(apply_T_star(coef, psi).values, (psi - mu * beurling(psi)).values, atol=1e-15)


# --- (Id - nu C)^{-1} ----------------------------------------------------------


def test_invert_nuC_examples(grid64):
    rng = np.random.default_rng(5)
    g = rand_field(grid64, rng)
    assert np.array_equal(invert_id_minus_nuC(grid64.zeros(), g).values, g.values)
    real = GridFunction(grid64, rng.standard_normal(grid64.shape))
    out = invert_id_minus_nuC(grid64.constant(0.3), real)
    assert np.allclose(out.values, real.values / 0.7, rtol=1e-15)
    with pytest.raises(EllipticityError):
        invert_id_minus_nuC(grid64.constant(1.0), g)


@given(seeds)
def test_invert_nuC_round_trip(seed):
    g = make_grid(4, 32)
    rng = np.random.default_rng(seed)
    nu1 = GridFunction(g, 0.7 * rng.uniform(0, 1, g.shape) * np.exp(2j * np.pi * rng.uniform(size=g.shape)))
    y = rand_field(g, rng)
    u = invert_id_minus_nuC(nu1, y)
    back = u - nu1 * u.conj()
    assert np.max(np.abs(back.values - y.values)) <= 1e-14 * max(1.0, y.max_abs())


# --- factorization --------------------------------------------------------------


def test_factor_collapse(grid64):
    mu = smooth_random_coefficients(grid64, 0.5, 1).mu
    fc = factor_coefficients(BeltramiCoefficients.from_fields(mu))
    assert fc.nu1.max_abs() == 0 and fc.nu2.max_abs() == 0
    assert np.array_equal(fc.mu2.values, mu.values)
    nu = smooth_random_coefficients(grid64, 0.5, 1).nu
    fc = factor_coefficients(BeltramiCoefficients(grid64.zeros(), nu, 0.5))
    assert fc.nu1.max_abs() == fc.mu2.max_abs() == fc.nu2.max_abs() == 0


@pytest.mark.parametrize("seed", range(3))
def test_factorization_identity(seed):
    g = make_grid(4, 256)
    coef = smooth_random_coefficients(g, 0.6, seed)
    fc = factor_coefficients(coef)
    psi = random_band_limited(g, np.random.default_rng(seed))
    a, b = apply_T_star(coef, psi), apply_factored_T_star(fc, psi)
    assert rel_l2(b.values, a.values) <= 1e-10


@given(seeds, st.floats(0.05, 0.95))
def test_factored_ellipticity(seed, k):
    g = make_grid(4, 32)
    fc = factor_coefficients(smooth_random_coefficients(g, k, seed))
    assert fc.k1 <= k + 1e-12
    assert fc.k2 <= k + 1e-12


# --- T* inversion -----------------------------------------------------------------


def test_invert_T_star_trivial(grid64):
    y = rand_field(grid64, np.random.default_rng(0))
    x, rep = invert_T_star(BeltramiCoefficients.zero(grid64), y)
    assert np.array_equal(x.values, y.values) and rep.converged


@pytest.mark.parametrize("seed", range(3))
def test_invert_T_star_round_trip(seed):
    g = make_grid(4, 256)
    coef = smooth_random_coefficients(g, 0.5, seed)
    x0 = random_band_limited(g, np.random.default_rng(seed + 10))
    y = apply_T_star(coef, x0)
    x, rep = invert_T_star(coef, y, tol=1e-8)
    assert rep.converged and rep.residuals[-1] <= 1e-8
    assert lp_norm(x - x0, 2) <= 1e-7


def test_invert_T_star_constant_mu():
    g = make_grid(4, 128)
    coef = BeltramiCoefficients(disk_indicator(g) * 0.5, g.zeros(), 0.5)
    y = random_band_limited(g, np.random.default_rng(0))
    x, rep = invert_T_star(coef, y, tol=1e-10)
    w, rep2 = neumann_invert(lambda v: v - coef.mu * beurling(v), y, 0.5)
    assert lp_norm(x - w, 2) <= 1e-9
