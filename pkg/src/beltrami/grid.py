"""Periodized square grids, complex grid functions and spectral Wirtinger calculus.

Fourier convention: ``f^(xi) = int f(z) exp(-2 pi i <z, xi>) dA`` with the complex
frequency ``xi = xi1 + i xi2`` (cycles per unit length).  Under it

    d     = (d_x - i d_y) / 2   <->   pi i conj(xi)
    d_bar = (d_x + i d_y) / 2   <->   pi i xi

Array axis 0 carries the x coordinate, axis 1 the y coordinate.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft


class GridError(ValueError):
    """Invalid grid parameters."""


class GridMismatchError(ValueError):
    """Two grid functions live on different grids."""


class EvaluationError(ValueError):
    """A sampled expression produced a non-finite value."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Square ``[-L, L]^2`` sampled with ``N`` points per axis."""

    L: float
    N: int
    shifted: bool = True

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            raise GridError(f"N must be an integer, got {self.N!r}")
        if self.N < 8 or not _is_power_of_two(int(self.N)):
            raise GridError(f"N must be a power of two >= 8, got {self.N}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise GridError(f"L must be positive and finite, got {self.L}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "shifted", bool(self.shifted))

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    def axis(self) -> np.ndarray:
        """1-D sample coordinates shared by both axes."""
        sigma = 0.5 if self.shifted else 0.0
        return -self.L + (np.arange(self.N) + sigma) * self.spacing

    def coordinate(self, i: int, j: int) -> complex:
        x = self.axis()
        return complex(x[i], x[j])

    @property
    def z(self) -> np.ndarray:
        return _z_array(self.L, self.N, self.shifted)

    @property
    def xi(self) -> np.ndarray:
        """Complex frequency ``xi1 + i xi2`` in FFT order."""
        return _xi_array(self.L, self.N)

    @property
    def nyquist(self) -> np.ndarray:
        """Boolean mask of the Nyquist rows and columns in FFT order."""
        return _nyquist_mask(self.N)

    def central_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Samples with both coordinates inside ``[-fraction L, fraction L]``."""
        x = self.axis()
        inside = np.abs(x) <= fraction * self.L
        return np.logical_and.outer(inside, inside)

    def disk_mask(self, radius: float, center: complex = 0.0) -> np.ndarray:
        return np.abs(self.z - center) < radius

    def annulus_mask(self, inner: float, outer: float, center: complex = 0.0) -> np.ndarray:
        r = np.abs(self.z - center)
        return (r >= inner) & (r < outer)

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape, dtype=complex))

    def constant(self, c: complex) -> "GridFunction":
        return GridFunction(self, np.full(self.shape, c, dtype=complex))


@functools.lru_cache(maxsize=16)
def _z_array(L: float, N: int, shifted: bool) -> np.ndarray:
    x = Grid(L, N, shifted).axis()
    z = x[:, None] + 1j * x[None, :]
    z.flags.writeable = False
    return z


@functools.lru_cache(maxsize=16)
def _xi_array(L: float, N: int) -> np.ndarray:
    f = sfft.fftfreq(N, d=2.0 * L / N)
    xi = f[:, None] + 1j * f[None, :]
    xi.flags.writeable = False
    return xi


@functools.lru_cache(maxsize=16)
def _nyquist_mask(N: int) -> np.ndarray:
    m = np.zeros((N, N), dtype=bool)
    m[N // 2, :] = True
    m[:, N // 2] = True
    m.flags.writeable = False
    return m


def make_grid(L: float, N: int, shifted: bool = True) -> Grid:
    return Grid(L, N, shifted)


@dataclass(frozen=True)
class SupportSpec:
    """Support radius of a compactly supported field and the domain padding around it."""

    radius: float
    padding_factor: float

    def __post_init__(self):
        if self.radius <= 0:
            raise GridError(f"support radius must be positive, got {self.radius}")
        if self.padding_factor < 2:
            raise GridError(
                f"padding_factor must be >= 2 (got {self.padding_factor:g}); "
                "the periodized Cauchy transform needs room to decay"
            )

    @classmethod
    def for_grid(cls, grid: Grid, radius: float) -> "SupportSpec":
        return cls(radius, grid.L / radius)


class GridFunction:
    """Complex samples over a :class:`Grid`.  Values are read-only."""

    __slots__ = ("grid", "values")
    __array_priority__ = 100

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=complex)
        if arr.ndim == 1 and arr.size == grid.N * grid.N:
            arr = arr.reshape(grid.shape)
        if arr.shape != grid.shape:
            raise GridError(f"expected {grid.N}x{grid.N} samples, got shape {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        return f"GridFunction(N={self.grid.N}, L={self.grid.L:g}, shifted={self.grid.shifted})"

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")
            return other.values
        if np.isscalar(other):
            return other
        if isinstance(other, np.ndarray) and other.shape == self.grid.shape:
            return other
        raise TypeError(f"cannot combine GridFunction with {type(other).__name__}")

    def _new(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return self._new(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._new(self.values - self._other(other))

    def __rsub__(self, other):
        return self._new(self._other(other) - self.values)

    def __mul__(self, other):
        return self._new(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._new(self.values / self._other(other))

    def __rtruediv__(self, other):
        return self._new(self._other(other) / self.values)

    def __neg__(self):
        return self._new(-self.values)

    def conj(self) -> "GridFunction":
        return self._new(np.conj(self.values))

    def abs(self) -> "GridFunction":
        return self._new(np.abs(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def mean(self) -> complex:
        return complex(self.values.mean())

    def max_abs(self, region: np.ndarray | None = None) -> float:
        a = np.abs(self.values)
        return float(a[region].max() if region is not None else a.max())

    def allclose(self, other: "GridFunction", rtol=1e-12, atol=0.0) -> bool:
        return bool(np.allclose(self.values, self._other(other), rtol=rtol, atol=atol))

    def spectrum(self) -> np.ndarray:
        return sfft.fft2(self.values)

    @classmethod
    def from_spectrum(cls, grid: Grid, spec: np.ndarray) -> "GridFunction":
        return cls(grid, sfft.ifft2(spec))


def sample(expr: Callable[[np.ndarray], np.ndarray], grid: Grid) -> GridFunction:
    """Evaluate a vectorised pointwise expression at every grid coordinate."""
    z = grid.z
    with np.errstate(all="ignore"):
        vals = np.asarray(expr(z), dtype=complex)
    if vals.ndim == 0:
        vals = np.full(grid.shape, complex(vals))
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise EvaluationError(
            f"expression is not finite at sample ({i}, {j}), z = {z[i, j]:.6g}"
        )
    return GridFunction(grid, vals)


def _apply_multiplier(f: GridFunction, mult: np.ndarray) -> GridFunction:
    return GridFunction.from_spectrum(f.grid, f.spectrum() * mult)


@functools.lru_cache(maxsize=16)
def _wirtinger_symbols(L: float, N: int) -> tuple[np.ndarray, np.ndarray]:
    xi = _xi_array(L, N)
    nyq = _nyquist_mask(N)
    d_sym = np.where(nyq, 0.0, np.pi * 1j * np.conj(xi))
    dbar_sym = np.where(nyq, 0.0, np.pi * 1j * xi)
    d_sym.flags.writeable = False
    dbar_sym.flags.writeable = False
    return d_sym, dbar_sym


def d(f: GridFunction) -> GridFunction:
    """Spectral Wirtinger derivative ``(d_x - i d_y) / 2``."""
    return _apply_multiplier(f, _wirtinger_symbols(f.grid.L, f.grid.N)[0])


def d_bar(f: GridFunction) -> GridFunction:
    """Spectral Wirtinger derivative ``(d_x + i d_y) / 2``."""
    return _apply_multiplier(f, _wirtinger_symbols(f.grid.L, f.grid.N)[1])


def _region(f: GridFunction, region):
    return f.values if region is None else f.values[region]


def inner_real(f: GridFunction, g: GridFunction, region: np.ndarray | None = None) -> float:
    """Real pairing ``Re int f conj(g)`` by Riemann sum."""
    gv = f._other(g)
    prod = f.values * np.conj(gv)
    if region is not None:
        prod = prod[region]
    return float(np.sum(prod.real) * f.grid.cell_area)


def lp_norm(f: GridFunction, p: float = 2.0, region: np.ndarray | None = None) -> float:
    if not p >= 1:
        raise ValueError(f"exponent must lie in [1, inf], got {p}")
    a = np.abs(_region(f, region))
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p == 2:
        return float(np.sqrt(np.sum(a * a) * f.grid.cell_area))
    return float((np.sum(a**p) * f.grid.cell_area) ** (1.0 / p))


def wirtinger_derivatives(f: GridFunction, order: int) -> list[GridFunction]:
    """All distinct Wirtinger derivatives of exactly the given order (1 or 2)."""
    if order == 1:
        return [d(f), d_bar(f)]
    if order == 2:
        df, dbf = d(f), d_bar(f)
        return [d(df), d(dbf), d_bar(dbf)]
    raise ValueError(f"order must be 1 or 2, got {order}")


def sobolev_norm(f: GridFunction, order: int = 1, p: float = 2.0,
                 region: np.ndarray | None = None) -> float:
    """Sum of L^p norms of ``f`` and its Wirtinger derivatives up to ``order``."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    total = lp_norm(f, p, region)
    for k in range(1, order + 1):
        total += sum(lp_norm(g, p, region) for g in wirtinger_derivatives(f, k))
    return total


def spectral_energy(f: GridFunction) -> float:
    """``sum |f^|^2`` scaled so that it equals ``lp_norm(f, 2)**2`` (Parseval)."""
    s = f.spectrum()
    return float(np.sum(np.abs(s) ** 2) * f.grid.cell_area / f.grid.N**2)


def random_band_limited(grid: Grid, rng: np.random.Generator, bandwidth: float = 2.0,
                        radius: float | None = None) -> GridFunction:
    """Random smooth complex field with spectrum supported in ``|xi| <= bandwidth``.

    Only the modes inside the band are drawn, so for a fixed ``L`` and seed the field
    is the same continuum function at every resolution that resolves the band.  With
    ``radius`` the field is additionally tapered by a smooth bump so that it is
    compactly supported; the taper widens the spectrum slightly.
    """
    N, L = grid.N, grid.L
    M = min(int(np.floor(bandwidth * 2.0 * L)), N // 2 - 1)
    m = np.arange(-M, M + 1)
    inside = np.hypot(m[:, None], m[None, :]) <= bandwidth * 2.0 * L
    coeffs = (rng.standard_normal(inside.shape) + 1j * rng.standard_normal(inside.shape)) * inside
    spec = np.zeros(grid.shape, dtype=complex)
    spec[np.ix_(m % N, m % N)] = coeffs * N**2
    f = GridFunction.from_spectrum(grid, spec)
    scale = lp_norm(f, 2)
    f = f / scale if scale > 0 else f
    if radius is not None:
        r = np.abs(grid.z) / radius
        with np.errstate(all="ignore"):
            taper = np.where(r < 1, np.exp(1.0 - 1.0 / (1.0 - r**2)), 0.0)
        f = f * GridFunction(grid, taper)
    return f
