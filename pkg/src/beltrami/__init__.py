"""Spectral solver and verification tools for the R-linear Beltrami equation."""

__version__ = "0.1.0"

from .grid import Grid, GridFunction, make_grid, sample, d, d_bar, inner_real, lp_norm, sobolev_norm
from .transforms import cauchy, beurling, beurling_star, conj_beurling
from .operators import BeltramiCoefficients, solve_beltrami, neumann_invert, invert_T_star
from .solver import principal_solution, inhomogeneous_solution, SolutionField

__all__ = [
    "Grid", "GridFunction", "make_grid", "sample", "d", "d_bar", "inner_real", "lp_norm",
    "sobolev_norm", "cauchy", "beurling", "beurling_star", "conj_beurling",
    "BeltramiCoefficients", "solve_beltrami", "neumann_invert", "invert_T_star",
    "principal_solution", "inhomogeneous_solution", "SolutionField",
]
