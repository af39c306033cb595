"""Principal and inhomogeneous solutions, localization, and residual checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import cutoff
from .grid import GridFunction, GridMismatchError, d, d_bar, inner_real, lp_norm
from .operators import BeltramiCoefficients, SolveReport, apply_beltrami, solve_beltrami
from .transforms import beurling, cauchy

PRINCIPAL = "principal"
CAUCHY_POTENTIAL = "cauchy_potential"


@dataclass(frozen=True)
class SolutionField:
    """A solution stored as its periodic part.

    For the principal normalization ``f`` holds the remainder ``f(z) - z``; for the
    Cauchy-potential normalization it holds ``f`` itself.
    """

    f: GridFunction
    df: GridFunction
    dbarf: GridFunction
    normalization: str
    report: SolveReport

    @property
    def grid(self):
        return self.f.grid

    def full_map(self) -> GridFunction:
        """Pointwise samples of the map itself, including the linear part."""
        if self.normalization == PRINCIPAL:
            return self.f + GridFunction(self.grid, self.grid.z)
        return self.f


def principal_solution(coef: BeltramiCoefficients, tol: float = 1e-10) -> SolutionField:
    """Solve ``d_bar f = mu d f + nu conj(d f)`` with ``d f - 1 = B(d_bar f)``.

    ``omega = d_bar f`` solves ``(Id - mu B - nu conj B) omega = mu + nu``.
    """
    rhs = coef.mu + coef.nu
    omega, report = solve_beltrami(coef, rhs, tol)
    return SolutionField(
        f=cauchy(omega),
        df=1.0 + beurling(omega),
        dbarf=omega,
        normalization=PRINCIPAL,
        report=report,
    )


def inhomogeneous_solution(coef: BeltramiCoefficients, h: GridFunction,
                           tol: float = 1e-10) -> SolutionField:
    """Solve ``d_bar f = mu d f + nu conj(d f) + h`` with ``f = C(d_bar f)``."""
    if h.grid != coef.grid:
        raise GridMismatchError("h and coefficients live on different grids")
    omega, report = solve_beltrami(coef, h, tol)
    return SolutionField(
        f=cauchy(omega),
        df=beurling(omega),
        dbarf=omega,
        normalization=CAUCHY_POTENTIAL,
        report=report,
    )


def pde_residual(sol: SolutionField, coef: BeltramiCoefficients,
                 h: GridFunction | None = None) -> GridFunction:
    """Pointwise ``d_bar f - mu d f - nu conj(d f) - h`` from the stored derivatives."""
    res = sol.dbarf - coef.mu * sol.df - coef.nu * sol.df.conj()
    if h is not None:
        res = res - h
    return res


@dataclass(frozen=True)
class Localization:
    psi: GridFunction
    F: GridFunction
    H: GridFunction
    G: GridFunction
    equation_residual: float   # L2 of d_bar F - mu d F - nu conj(d F) - H
    g_residual: float          # L2 of d_bar G - (H - conj(F) d_bar nu - B(F) d_bar mu)
    region_norm: float         # L2 of H, the scale both residuals compare against


def localize(sol: SolutionField, coef: BeltramiCoefficients, h: GridFunction | None,
             R: float, center: complex = 0.0,
             region: np.ndarray | None = None) -> Localization:
    """Cut the solution off with the shipped bump of radius ``R`` and check both
    localized equations.  Residuals are L^2 norms over ``region`` (central quarter by
    default)."""
    grid = sol.grid
    if R >= grid.L:
        raise ValueError(f"cutoff radius {R} must lie inside the domain half-width {grid.L}")
    if h is None:
        h = grid.zeros()
    if region is None:
        region = grid.central_mask()
    mu, nu = coef.mu, coef.nu
    f = sol.full_map()
    psi = cutoff(grid, R, center)
    F = psi * f
    H = (f - nu * f.conj()) * d_bar(psi) - mu * f * d(psi) + h * psi
    BF = beurling(F)
    G = F - mu * BF - nu * F.conj()
    dF = d(F)
    eq_res = d_bar(F) - mu * dF - nu * dF.conj() - H
    g_res = d_bar(G) - (H - F.conj() * d_bar(nu) - BF * d_bar(mu))
    return Localization(
        psi=psi, F=F, H=H, G=G,
        equation_residual=lp_norm(eq_res, 2, region),
        g_residual=lp_norm(g_res, 2, region),
        region_norm=lp_norm(H, 2, region),
    )


def beltrami_pairing(f: GridFunction, coef: BeltramiCoefficients, phi: GridFunction,
                     h: GridFunction | None = None) -> float:
    """Distributional residual ``<d_bar f - mu d f - nu conj(d f) - h, phi>``.

    Every derivative is moved onto ``phi`` and the coefficients, so ``f`` is only
    ever integrated, never differentiated.
    """
    mu, nu = coef.mu, coef.nu
    d_phi, dbar_phi = d(phi), d_bar(phi)
    total = (
        -inner_real(f, d_phi)
        + inner_real(f, phi * d(mu).conj())
        + inner_real(f.conj(), phi * d(nu.conj()))
        + inner_real(f, mu.conj() * dbar_phi)
        + inner_real(f.conj(), nu.conj() * d_phi)
    )
    if h is not None:
        total -= inner_real(h, phi)
    return total


def w1inf_norm(phi: GridFunction) -> float:
    """``||phi||_inf + ||d phi||_inf + ||d_bar phi||_inf``."""
    return phi.max_abs() + d(phi).max_abs() + d_bar(phi).max_abs()


def second_derivatives(sol: SolutionField) -> tuple[GridFunction, GridFunction, GridFunction]:
    """``(d d f, d_bar d f, d_bar d_bar f)`` from the stored ``d_bar f``."""
    dbar_d = d(sol.dbarf)
    return beurling(dbar_d), dbar_d, d_bar(sol.dbarf)


def second_derivative_consistency(sol: SolutionField) -> float:
    """Relative L^2 gap between ``d(d f)`` and ``B(d d_bar f)``."""
    a = d(sol.df)
    b = beurling(d(sol.dbarf))
    scale = lp_norm(b, 2)
    return lp_norm(a - b, 2) / scale if scale > 0 else lp_norm(a - b, 2)


def distortion_check(sol: SolutionField, k: float, region: np.ndarray | None = None) -> float:
    """``max (|d_bar f| - k |d f|)`` over ``region`` (central quarter by default)."""
    if region is None:
        region = sol.grid.central_mask()
    gap = np.abs(sol.dbarf.values) - k * np.abs(sol.df.values)
    return float(gap[region].max())
