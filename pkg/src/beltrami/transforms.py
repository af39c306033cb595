"""Cauchy and Beurling transforms as Fourier multipliers on the periodized grid.

Symbols (complex frequency ``xi``):

    cauchy         1 / (pi i xi)       zero mode 0
    beurling       conj(xi) / xi       zero mode 1
    beurling_star  xi / conj(xi)       zero mode 1

On the Nyquist rows/columns the derivative symbols vanish; there the Cauchy symbol
is 0 and both Beurling symbols are 1, which keeps ``B B* = Id``, the conjugation
identity ``conj(B f) = B*(conj f)`` and ``B d_bar = d`` exact for every field.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import (Grid, GridFunction, _nyquist_mask, _xi_array, d, d_bar, inner_real,
                   lp_norm, random_band_limited)


def _cauchy_symbol(xi):
    with np.errstate(all="ignore"):
        return 1.0 / (np.pi * 1j * xi)


def _beurling_symbol(xi):
    with np.errstate(all="ignore"):
        return np.conj(xi) / xi


def _beurling_star_symbol(xi):
    with np.errstate(all="ignore"):
        return xi / np.conj(xi)


@dataclass(frozen=True)
class MultiplierOp:
    name: str
    symbol: Callable[[np.ndarray], np.ndarray]
    zero_mode_value: complex
    nyquist_value: complex

    def array(self, grid: Grid) -> np.ndarray:
        return _symbol_array(self, grid.L, grid.N)

    def __call__(self, f: GridFunction) -> GridFunction:
        return GridFunction.from_spectrum(f.grid, f.spectrum() * self.array(f.grid))


@functools.lru_cache(maxsize=32)
def _symbol_array(op: MultiplierOp, L: float, N: int) -> np.ndarray:
    xi = _xi_array(L, N)
    m = op.symbol(xi)
    m = np.where(_nyquist_mask(N), op.nyquist_value, m)
    m[0, 0] = op.zero_mode_value
    m.flags.writeable = False
    return m


CAUCHY = MultiplierOp("cauchy", _cauchy_symbol, 0.0, 0.0)
BEURLING = MultiplierOp("beurling", _beurling_symbol, 1.0, 1.0)
BEURLING_STAR = MultiplierOp("beurling_star", _beurling_star_symbol, 1.0, 1.0)


def cauchy(f: GridFunction) -> GridFunction:
    """Solid Cauchy transform; ``d_bar(cauchy(f)) = f - mean(f)`` off the Nyquist band."""
    return CAUCHY(f)


def beurling(f: GridFunction) -> GridFunction:
    return BEURLING(f)


def beurling_star(f: GridFunction) -> GridFunction:
    return BEURLING_STAR(f)


def conj_beurling(f: GridFunction) -> GridFunction:
    """``conj(B f)``, equal to ``B*(conj f)``."""
    return BEURLING(f).conj()


IDENTITIES = ("BBstar", "Bstar_B", "B_dbar", "adjoint", "conjugation", "cauchy_dbar", "isometry")


def _rel(a: GridFunction, b: GridFunction) -> float:
    scale = lp_norm(b, 2)
    gap = lp_norm(a - b, 2)
    return gap / scale if scale > 0 else gap


def identity_residuals(grid: Grid, rng: np.random.Generator, trials: int = 20,
                       bandwidth: float = 2.0) -> list[dict]:
    """Relative residuals of the multiplier identities on random band-limited fields.

    One row per (trial, identity) with keys ``trial``, ``identity``, ``residual``.
    """
    rows = []
    for t in range(trials):
        f = random_band_limited(grid, rng, bandwidth)
        g = random_band_limited(grid, rng, bandwidth)
        nf, ng = lp_norm(f, 2), lp_norm(g, 2)
        h = f - f.mean()
        vals = {
            "BBstar": _rel(beurling(beurling_star(f)), f),
            "Bstar_B": _rel(beurling_star(beurling(f)), f),
            "B_dbar": _rel(beurling(d_bar(f)), d(f)),
            "adjoint": abs(inner_real(beurling(f), g) - inner_real(f, beurling_star(g))) / (nf * ng),
            "conjugation": _rel(conj_beurling(f), beurling_star(f.conj())),
            "cauchy_dbar": _rel(d_bar(cauchy(h)), h),
            "isometry": abs(lp_norm(beurling(f), 2) - nf) / nf,
        }
        rows.extend({"trial": t, "identity": k, "residual": float(vals[k])} for k in IDENTITIES)
    return rows
