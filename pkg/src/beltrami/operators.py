"""R-linear Beltrami operators, Neumann-series inversion and the T / T* factorization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import GridFunction, GridMismatchError, lp_norm
from .transforms import beurling, beurling_star, conj_beurling

ELLIPTICITY_SLACK = 1e-12


class EllipticityError(ValueError):
    """Coefficients violate ``ess-sup(|mu| + |nu|) < 1``."""


@dataclass(frozen=True)
class BeltramiCoefficients:
    """Pair ``(mu, nu)`` with ellipticity constant ``k`` and distortion ``K``."""

    mu: GridFunction
    nu: GridFunction
    k: float

    def __post_init__(self):
        if self.mu.grid != self.nu.grid:
            raise GridMismatchError("mu and nu must share a grid")
        measured = measured_k(self.mu, self.nu)
        if measured > self.k + ELLIPTICITY_SLACK:
            raise EllipticityError(
                f"declared k={self.k!r} is below the sampled sup |mu|+|nu| = {measured!r}"
            )
        if not self.k < 1:
            raise EllipticityError(f"ellipticity violated: k={self.k!r}")

    @classmethod
    def from_fields(cls, mu: GridFunction, nu: GridFunction | None = None,
                    k: float | None = None) -> "BeltramiCoefficients":
        if nu is None:
            nu = mu.grid.zeros()
        if k is None:
            k = measured_k(mu, nu)
        return cls(mu, nu, float(k))

    @classmethod
    def zero(cls, grid) -> "BeltramiCoefficients":
        return cls(grid.zeros(), grid.zeros(), 0.0)

    @property
    def grid(self):
        return self.mu.grid

    @property
    def K(self) -> float:
        return (1 + self.k) / (1 - self.k)


def measured_k(mu: GridFunction, nu: GridFunction) -> float:
    return float(np.max(np.abs(mu.values) + np.abs(nu.values)))


@dataclass(frozen=True)
class FactoredCoefficients:
    """Coefficients of ``T* = (Id - nu1 C)(Id - mu2 B - nu2 C B)``."""

    mu1: GridFunction
    nu1: GridFunction
    mu2: GridFunction
    nu2: GridFunction

    @property
    def k1(self) -> float:
        return measured_k(self.mu1, self.nu1)

    @property
    def k2(self) -> float:
        return measured_k(self.mu2, self.nu2)


@dataclass
class SolveReport:
    iterations: int
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    k_used: float = 0.0
    tol: float = 0.0

    def ratios(self) -> np.ndarray:
        r = np.asarray(self.residuals)
        if len(r) < 2:
            return np.empty(0)
        with np.errstate(all="ignore"):
            return r[1:] / r[:-1]

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residuals": [float(r) for r in self.residuals],
            "converged": self.converged,
            "k_used": self.k_used,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        return cls(int(data["iterations"]), list(data["residuals"]), bool(data["converged"]),
                   float(data["k_used"]), float(data["tol"]))


class NonConvergenceError(RuntimeError):
    """Raised by callers that demand convergence; carries the report."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


def apply_beltrami(coef: BeltramiCoefficients, omega: GridFunction) -> GridFunction:
    """``(Id - mu B - nu conj B) omega``."""
    b = beurling(omega)
    return omega - coef.mu * b - coef.nu * b.conj()


def default_max_iter(tol: float, rhs_norm: float, k: float, margin: int = 16) -> int:
    if k <= 0 or rhs_norm <= tol:
        return 1 + margin
    return max(1, math.ceil(math.log(tol / rhs_norm) / math.log(k))) + margin


def neumann_invert(apply: Callable[[GridFunction], GridFunction], rhs: GridFunction,
                   k: float, tol: float = 1e-10,
                   max_iter: int | None = None) -> tuple[GridFunction, SolveReport]:
    """Solve ``apply(omega) = rhs`` by the fixed point ``omega <- rhs + (Id - apply) omega``.

    ``apply`` must be ``Id - A`` with ``||A|| <= k < 1`` in discrete L^2.  The residual
    after each step is recorded; non-convergence is reported, never raised.
    """
    if not 0 <= k < 1:
        raise EllipticityError(f"contraction bound must satisfy 0 <= k < 1, got {k}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    rhs_norm = lp_norm(rhs, 2)
    if max_iter is None:
        max_iter = default_max_iter(tol, rhs_norm, k)
    omega = rhs
    residuals: list[float] = []
    converged = False
    for _ in range(max_iter):
        res = apply(omega) - rhs
        rn = lp_norm(res, 2)
        residuals.append(rn)
        if rn <= tol:
            converged = True
            break
        omega = omega - res
    report = SolveReport(len(residuals), residuals, converged, float(k), float(tol))
    return omega, report


def solve_beltrami(coef: BeltramiCoefficients, rhs: GridFunction, tol: float = 1e-10,
                   max_iter: int | None = None) -> tuple[GridFunction, SolveReport]:
    """Invert ``Id - mu B - nu conj B`` on ``rhs``."""
    if rhs.grid != coef.grid:
        raise GridMismatchError("rhs and coefficients live on different grids")
    return neumann_invert(lambda w: apply_beltrami(coef, w), rhs, coef.k, tol, max_iter)


def _one_minus_nu_sq(coef: BeltramiCoefficients) -> np.ndarray:
    return 1.0 - np.abs(coef.nu.values) ** 2


def apply_T(coef: BeltramiCoefficients, psi: GridFunction) -> GridFunction:
    """``T psi = psi - B*(conj(mu)/(1-|nu|^2) psi) - conj(mu conj(nu)/(1-|nu|^2) psi)``."""
    denom = _one_minus_nu_sq(coef)
    a = coef.mu.conj() / denom
    c = coef.mu * coef.nu.conj() / denom
    return psi - beurling_star(a * psi) - (c * psi).conj()


def apply_T_star(coef: BeltramiCoefficients, psi: GridFunction) -> GridFunction:
    """``T* psi = psi - mu/(1-|nu|^2) B psi - conj(mu) nu/(1-|nu|^2) conj(psi)``."""
    denom = _one_minus_nu_sq(coef)
    mu1 = coef.mu / denom
    nu1 = coef.mu.conj() * coef.nu / denom
    return psi - mu1 * beurling(psi) - nu1 * psi.conj()


def invert_id_minus_nuC(nu1: GridFunction, g: GridFunction) -> GridFunction:
    """Closed-form inverse of ``u -> u - nu1 conj(u)``."""
    if np.max(np.abs(nu1.values)) >= 1:
        raise EllipticityError("ellipticity violated: sup |nu1| >= 1")
    return (g + nu1 * g.conj()) / (1.0 - np.abs(nu1.values) ** 2)


def factor_coefficients(coef: BeltramiCoefficients) -> FactoredCoefficients:
    mu, nu = coef.mu, coef.nu
    d0 = 1.0 - np.abs(nu.values) ** 2
    mu1 = mu / d0
    nu1 = nu * mu.conj() / d0
    d1 = 1.0 - np.abs(nu1.values) ** 2
    mu2 = mu1 / d1
    nu2 = nu1 * mu1.conj() / d1
    return FactoredCoefficients(mu1, nu1, mu2, nu2)


def apply_factored_T_star(fc: FactoredCoefficients, psi: GridFunction) -> GridFunction:
    """``(Id - nu1 C)(psi - mu2 B psi - nu2 conj(B psi))``, evaluated factor by factor."""
    inner = psi - fc.mu2 * beurling(psi) - fc.nu2 * conj_beurling(psi)
    return inner - fc.nu1 * inner.conj()


def invert_T_star(coef: BeltramiCoefficients, y: GridFunction,
                  tol: float = 1e-10) -> tuple[GridFunction, SolveReport]:
    """Solve ``T* x = y`` through the two-factor form.

    The conjugation factor is inverted in closed form; the remaining Beltrami factor
    with coefficients ``(mu2, nu2)`` by Neumann iteration.  The returned report
    carries the residual of the original equation as its last entry.
    """
    fc = factor_coefficients(coef)
    u = invert_id_minus_nuC(fc.nu1, y)
    k2 = min(max(fc.k2, 0.0), coef.k)
    if k2 == 0.0:
        x, report = u, SolveReport(1, [], True, 0.0, tol)
    else:
        # ||(Id - nu1 C) e|| <= (1 + sup|nu1|) ||e||
        inner_tol = tol / (1.0 + fc.k1)
        x, report = neumann_invert(
            lambda w: w - fc.mu2 * beurling(w) - fc.nu2 * conj_beurling(w), u, k2, inner_tol
        )
    final = lp_norm(apply_T_star(coef, x) - y, 2)
    report.residuals.append(final)
    report.converged = bool(report.converged and final <= tol)
    report.tol = tol
    return x, report
