import numpy as np
import pytest

from beltrami.analytic import cutoff, mollified_radial_coefficients, radial_stretching, smooth_random_coefficients
from beltrami.grid import GridFunction, GridMismatchError, d, d_bar, lp_norm, make_grid, random_band_limited, sample
from beltrami.io import read_solution, write_solution
from beltrami.operators import BeltramiCoefficients, apply_beltrami
from beltrami.solver import (
    CAUCHY_POTENTIAL,
    PRINCIPAL,
    beltrami_pairing,
    distortion_check,
    inhomogeneous_solution,
    localize,
    pde_residual,
    principal_solution,
    second_derivative_consistency,
    second_derivatives,
    w1inf_norm,
)
from beltrami.transforms import beurling, cauchy

from conftest import rel_l2


@pytest.fixture(scope="module")
def radial1024():
    g = make_grid(2, 1024)
    out = {}
    for c in (4, 8, 16):
        coef = mollified_radial_coefficients(2, g, c * g.spacing)
        out[c] = (coef, principal_solution(coef))
    return g, out


def test_identity_principal_solution():
    g = make_grid(2, 64)
    sol = principal_solution(BeltramiCoefficients.zero(g))
    assert sol.f.max_abs() == 0 and np.all(sol.df.values == 1)
    assert np.array_equal(sol.full_map().values, g.z)


def test_principal_invariants():
    g = make_grid(4, 256)
    coef = smooth_random_coefficients(g, 0.6, 1)
    sol = principal_solution(coef)
    assert sol.normalization == PRINCIPAL and sol.report.converged
    assert np.allclose(sol.df.values, (1 + beurling(sol.dbarf)).values, atol=1e-14)
    assert lp_norm(pde_residual(sol, coef), 2) <= 1e-10
    # d_bar f lives where the coefficients do
    outside = np.abs(g.z) > 1.0
    assert np.max(np.abs(sol.dbarf.values[outside])) <= 1e-6 * sol.dbarf.max_abs()


def test_radial_stretching_refinement():
    errs = []
    for N in (256, 512):
        g = make_grid(2, N)
        sol = principal_solution(mollified_radial_coefficients(2, g, 4 * g.spacing))
        want = RadialF(g)
        errs.append(rel_l2(sol.full_map().values, want, g.central_mask()))
    assert errs[1] < errs[0] < 0.01


def RadialF(g):
    return radial_stretching(2, g).model.f(g.z)


def test_conjugate_beltrami():
    g = make_grid(4, 256)
    coef = BeltramiCoefficients(g.zeros(), cutoff(g, 1.0) * 0.5, 0.5)
    sol = principal_solution(coef, tol=1e-10)
    assert lp_norm(pde_residual(sol, coef), 2) <= 1e-10
    assert distortion_check(sol, 0.5) <= 1e-2


def test_remainder_decays_like_one_over_L():
    # measured constant 0.0487 for mu = 0.4 bump at spacing 1/64; frozen at 0.05
    for L in (2, 4, 8):
        g = make_grid(L, int(128 * L))
        sol = principal_solution(BeltramiCoefficients.from_fields(0.4 * cutoff(g, 1.0)))
        assert sol.f.max_abs(~g.central_mask(0.95)) <= 0.05 / L


# --- inhomogeneous ---------------------------------------------------------------


def test_inhomogeneous_zero_coefficients():
    g = make_grid(4, 128)
    h = random_band_limited(g, np.random.default_rng(0))
    h = h - h.mean()
    sol = inhomogeneous_solution(BeltramiCoefficients.zero(g), h)
    assert sol.normalization == CAUCHY_POTENTIAL
    assert np.array_equal(sol.f.values, cauchy(h).values)
    assert np.array_equal(sol.dbarf.values, h.values)
    assert rel_l2(d_bar(sol.f).values, h.values) <= 1e-12


def test_inhomogeneous_constructed_answer():
    g = make_grid(4, 256)
    coef = smooth_random_coefficients(g, 0.5, 3)
    w0 = random_band_limited(g, np.random.default_rng(4), radius=1.5)
    sol = inhomogeneous_solution(coef, apply_beltrami(coef, w0), tol=1e-12)
    assert lp_norm(sol.dbarf - w0, 2) <= 1e-11
    assert lp_norm(pde_residual(sol, coef, apply_beltrami(coef, w0)), 2) <= 1e-12


def test_inhomogeneous_zero_rhs():
    g = make_grid(4, 64)
    sol = inhomogeneous_solution(smooth_random_coefficients(g, 0.5), g.zeros())
    assert sol.f.max_abs() == 0


def test_inhomogeneous_grid_mismatch():
    g = make_grid(4, 64)
    with pytest.raises(GridMismatchError):
        inhomogeneous_solution(BeltramiCoefficients.zero(g), make_grid(2, 64).zeros())


# --- localization -------------------------------------------------------------------


def test_localize_large_cutoff():
    """The shipped bump tends to 1 on compacts as R grows; H tends to h psi there."""
    g = make_grid(4, 256)
    coef = BeltramiCoefficients.from_fields(0.4 * cutoff(g, 0.5))
    h = 0.3 * cutoff(g, 0.5)
    sol = inhomogeneous_solution(coef, h)
    inner = g.disk_mask(0.5)
    gaps = []
    for R in (1.5, 2.5, 3.5):
        loc = localize(sol, coef, h, R=R)
        gaps.append(np.max(np.abs(loc.H.values - (h * loc.psi).values)[inner]))
    assert gaps[2] < gaps[1] < gaps[0]


def test_localize_identity():
    g = make_grid(4, 256)
    coef = BeltramiCoefficients.zero(g)
    sol = principal_solution(coef)
    loc = localize(sol, coef, None, R=1.5)
    assert np.array_equal(loc.H.values, (GridFunction(g, g.z) * d_bar(loc.psi)).values)
    assert np.all(loc.psi.imag == 0)
    # the residual is the spectral discretization error of the bump alone
    res = []
    for N in (128, 256, 512):
        g = make_grid(4, N)
        zero = BeltramiCoefficients.zero(g)
        loc = localize(principal_solution(zero), zero, None, R=1.5)
        res.append(loc.equation_residual)
        assert loc.g_residual == loc.equation_residual
    assert res[2] < res[1] < res[0] and res[2] <= 1e-6


def test_localize_radial_stretching(radial1024):
    """Residual of the equation for G; at 4h the product rule on the barely resolved
    coefficient costs ~3e-3, so the example is pinned at 8h and 16h."""
    g, sols = radial1024
    res = {}
    for c, (coef, sol) in sols.items():
        loc = localize(sol, coef, None, R=1.5)
        res[c] = (loc.equation_residual, loc.g_residual)
    assert res[8][1] <= 1e-3 and res[16][1] <= 1e-3
    assert res[16][1] < res[8][1] < res[4][1]
    assert all(r[0] <= 1e-3 for r in res.values())


def test_localize_rejects_large_radius():
    g = make_grid(2, 64)
    sol = principal_solution(BeltramiCoefficients.zero(g))
    with pytest.raises(ValueError):
        localize(sol, BeltramiCoefficients.zero(g), None, R=2.5)


# --- pairing ----------------------------------------------------------------------------


def test_pairing_holomorphic():
    # the pairing never differentiates f, so f need not be periodic; what is
    # left is the quadrature error of the bump, which falls fast with N
    worst = []
    for N in (256, 512):
        g = make_grid(4, N)
        f = sample(lambda z: np.exp(z), g)
        zero = BeltramiCoefficients.zero(g)
        rng = np.random.default_rng(0)
        errs = []
        for _ in range(5):
            c = complex(*rng.uniform(-1, 1, 2))
            phi = cutoff(g, rng.uniform(0.5, 1.5), c)
            errs.append(abs(beltrami_pairing(f, zero, phi)) / phi.max_abs())
        worst.append(max(errs))
    assert worst[1] <= 1e-6 and worst[1] < worst[0] / 10


def random_bumps(g, n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield cutoff(g, rng.uniform(0.75, 1.25), complex(*rng.uniform(-0.5, 0.5, 2)))


def test_pairing_radial_solution(radial1024):
    g, sols = radial1024
    taper = cutoff(g, 1.8)
    for c, (coef, sol) in sols.items():
        f = sol.full_map()
        bad = f + GridFunction(g, np.conj(g.z)) * taper * 0.1
        for phi in random_bumps(g, 10, c):
            w = w1inf_norm(phi)
            assert abs(beltrami_pairing(f, coef, phi)) <= 1e-3 * w
            assert abs(beltrami_pairing(bad, coef, phi)) >= 1e-2 * w


def _pair(res, phi):
    return float(np.sum((res.values * np.conj(phi.values)).real) * res.grid.cell_area)


def test_pairing_is_integration_by_parts():
    """For periodic f the pairing equals the strong residual built from spectral
    derivatives of f itself, to roundoff."""
    g = make_grid(4, 256)
    coef = smooth_random_coefficients(g, 0.5, 2)
    h = random_band_limited(g, np.random.default_rng(1), radius=1.5)
    f = random_band_limited(g, np.random.default_rng(2), radius=2.0)
    phi = cutoff(g, 1.5, 0.2 - 0.1j)
    df = d(f)
    strong = d_bar(f) - coef.mu * df - coef.nu * df.conj() - h
    # products with mu, nu alias slightly, so equality holds to ~1e-10 relative
    assert beltrami_pairing(f, coef, phi, h) == pytest.approx(_pair(strong, phi), rel=1e-8)


def test_pairing_mean_mode_term():
    """C has zero mode 0 and B zero mode 1, so the stored derivatives of a Cauchy
    potential differ from those of f by m = mean(d_bar f); the pairing sees
    the stored residual plus -m + mu m + nu conj(m)."""
    g = make_grid(4, 256)
    coef = smooth_random_coefficients(g, 0.5, 2)
    h = random_band_limited(g, np.random.default_rng(1), radius=1.5)
    sol = inhomogeneous_solution(coef, h, tol=1e-12)
    m = sol.dbarf.mean()
    assert abs(m) > 1e-4
    phi = cutoff(g, 1.5)
    shift = g.constant(-m) + coef.mu * m + coef.nu * np.conj(m)
    want = _pair(pde_residual(sol, coef, h) + shift, phi)
    assert beltrami_pairing(sol.f, coef, phi, h) == pytest.approx(want, abs=1e-12)


def test_mean_mode_defect_decays_like_inverse_area():
    """For non-symmetric coefficients the pairing of the principal map carries the
    mean-mode term, which falls like 1/L^2 at fixed spacing."""
    scaled = []
    for L, N in ((2, 256), (4, 512), (8, 1024)):
        g = make_grid(L, N)
        coef = BeltramiCoefficients.from_fields(cutoff(g, 1.0) * 0.4)
        sol = principal_solution(coef)
        scaled.append(beltrami_pairing(sol.full_map(), coef, cutoff(g, 1.0)) * L * L)
    assert max(scaled) / min(scaled) == pytest.approx(1.0, abs=0.05)


def test_radial_solution_has_no_mean_mode(radial1024):
    _, sols = radial1024
    for coef, sol in sols.values():
        assert abs(sol.dbarf.mean()) < 1e-9


# --- second derivatives and distortion ------------------------------------------------------


def test_second_derivatives_identity():
    g = make_grid(2, 64)
    sol = principal_solution(BeltramiCoefficients.zero(g))
    assert all(x.max_abs() == 0 for x in second_derivatives(sol))


def test_second_derivatives_of_cauchy_potential():
    g = make_grid(4, 256)
    h = sample(lambda z: np.exp(-4 * np.abs(z) ** 2), g)
    h = h - h.mean()
    sol = inhomogeneous_solution(BeltramiCoefficients.zero(g), h)
    _, _, dbdb = second_derivatives(sol)
    want = sample(lambda z: -4 * z * np.exp(-4 * np.abs(z) ** 2), g)
    assert rel_l2(dbdb.values, want.values) <= 1e-8
    assert second_derivative_consistency(sol) <= 1e-10


def test_second_derivative_slope(radial1024):
    g, sols = radial1024
    coef, sol = sols[4]
    dd, _, _ = second_derivatives(sol)
    assert second_derivative_consistency(sol) <= 1e-10
    r = np.abs(g.z)
    edges = 4 * g.spacing * 2.0 ** np.arange(10)
    edges = edges[edges < 0.6]
    mids, vals = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        shell = (r >= a) & (r < b)
        mids.append(np.sqrt(a * b))
        vals.append(np.mean(np.abs(dd.values[shell])))
    slope = np.polyfit(np.log(mids), np.log(vals), 1)[0]
    assert slope == pytest.approx(-1.5, abs=0.1)


def test_distortion_identity():
    g = make_grid(2, 64)
    sol = principal_solution(BeltramiCoefficients.zero(g))
    assert distortion_check(sol, 0.3) == pytest.approx(-0.3)


def test_distortion_radial(radial1024):
    g, sols = radial1024
    coef, sol = sols[4]
    val = distortion_check(sol, 1 / 3)
    assert -1e-3 <= val <= 1e-2


def test_solution_round_trip(tmp_path):
    g = make_grid(2, 64)
    coef = smooth_random_coefficients(g, 0.4, 0)
    sol = principal_solution(coef)
    paths = write_solution(tmp_path / "sol", sol)
    back = read_solution(tmp_path / "sol")
    assert [p.suffix for p in paths] == [".bgf", ".json"]
    for a, b in ((sol.f, back.f), (sol.df, back.df), (sol.dbarf, back.dbarf)):
        assert np.array_equal(a.values, b.values) and a.grid == b.grid
    assert back.report == sol.report and back.normalization == sol.normalization
