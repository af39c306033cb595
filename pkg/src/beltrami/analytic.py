"""Closed-form oracles, the shared smooth bump, mollification and log of the derivative."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from .grid import Grid, GridError, GridFunction

if TYPE_CHECKING:
    from .solver import SolutionField


class DegeneracyError(ValueError):
    """``d f`` vanishes (numerically) somewhere, so no logarithm exists."""


def bump_profile(t: np.ndarray) -> np.ndarray:
    """``exp(1 - 1/(1 - t^2))`` for ``|t| < 1``, zero outside; equals 1 at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def cutoff(grid: Grid, R: float, center: complex = 0.0) -> GridFunction:
    """The shipped real cutoff ``psi_R(z) = bump(|z - center| / R)``."""
    return GridFunction(grid, bump_profile(np.abs(grid.z - center) / R))


# ---------------------------------------------------------------------------
# radial stretching


@dataclass(frozen=True)
class RadialStretching:
    """``f(z) = z |z|^(1/K - 1)`` on the closed unit disk, ``f(z) = z`` outside."""

    K: float

    def __post_init__(self):
        if not self.K >= 1:
            raise ValueError(f"distortion K must be >= 1, got {self.K}")

    @property
    def a(self) -> float:
        """Exponent with ``f = z^(1+a) conj(z)^a`` inside the disk."""
        return (1.0 - self.K) / (2.0 * self.K)

    @property
    def k(self) -> float:
        return (self.K - 1.0) / (self.K + 1.0)

    def _split(self, z):
        z = np.asarray(z, dtype=complex)
        r = np.abs(z)
        return z, r, r <= 1.0

    def f(self, z):
        z, r, inside = self._split(z)
        with np.errstate(all="ignore"):
            return np.where(inside, z * r ** (2 * self.a), z)

    def df(self, z):
        z, r, inside = self._split(z)
        with np.errstate(all="ignore"):
            return np.where(inside, (1 + self.a) * r ** (2 * self.a), 1.0 + 0j)

    def dbarf(self, z):
        z, r, inside = self._split(z)
        with np.errstate(all="ignore"):
            return np.where(inside, self.a * (z / np.conj(z)) * r ** (2 * self.a), 0j)

    def mu(self, z):
        z, r, inside = self._split(z)
        with np.errstate(all="ignore"):
            return np.where(r < 1.0, -self.k * z / np.conj(z), 0j)

    def ddf(self, z):
        """``d d f``."""
        z, r, inside = self._split(z)
        a = self.a
        with np.errstate(all="ignore"):
            return np.where(inside, a * (1 + a) * r ** (2 * a) / z, 0j)

    def dbar_df(self, z):
        """``d_bar d f``."""
        z, r, inside = self._split(z)
        a = self.a
        with np.errstate(all="ignore"):
            return np.where(inside, a * (1 + a) * r ** (2 * a) / np.conj(z), 0j)

    def dbar_dbarf(self, z):
        """``d_bar d_bar f``."""
        z, r, inside = self._split(z)
        a = self.a
        with np.errstate(all="ignore"):
            zb = np.conj(z)
            return np.where(inside, a * (a - 1) * (z / zb) * r ** (2 * a) / zb, 0j)

    def second_derivative_modulus(self, z):
        """``|dd f| + |d_bar d f| + |d_bar d_bar f|`` (pointwise size of ``D^2 f``)."""
        return np.abs(self.ddf(z)) + np.abs(self.dbar_df(z)) + np.abs(self.dbar_dbarf(z))


@dataclass(frozen=True)
class RadialStretchingSample:
    model: RadialStretching
    mu: GridFunction
    f: GridFunction          # remainder f(z) - z
    df: GridFunction
    dbarf: GridFunction
    ddf: GridFunction
    dbar_df: GridFunction
    dbar_dbarf: GridFunction


def radial_stretching(K: float, grid: Grid) -> RadialStretchingSample:
    if not grid.shifted:
        raise GridError("radial stretching is singular at 0; use a shifted grid")
    m = RadialStretching(K)
    z = grid.z

    def gf(values):
        return GridFunction(grid, values)

    return RadialStretchingSample(
        model=m,
        mu=gf(m.mu(z)),
        f=gf(m.f(z) - z),
        df=gf(m.df(z)),
        dbarf=gf(m.dbarf(z)),
        ddf=gf(m.ddf(z)),
        dbar_df=gf(m.dbar_df(z)),
        dbar_dbarf=gf(m.dbar_dbarf(z)),
    )


def radial_profile_map(m, r: np.ndarray, r_max: float) -> np.ndarray:
    """Profile ``g`` of the principal map ``f = z g(|z|)`` for ``mu = -m(|z|) z / conj(z)``.

    ``m`` is real, supported in ``[0, r_max]``; ``g`` solves
    ``g'/g = -2 m / (r (1 + m))`` with ``g = 1`` beyond ``r_max``.
    Evaluated by adaptive quadrature; an oracle for radially symmetric coefficients.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.ones_like(r)

    def integrand(t):
        mt = m(t)
        return 2.0 * mt / (t * (1.0 + mt))

    for idx, ri in enumerate(r):
        if ri < r_max:
            val, _ = integrate.quad(integrand, ri, r_max, limit=400)
            out[idx] = np.exp(val)
    return out


# ---------------------------------------------------------------------------
# mollification


@dataclass(frozen=True)
class MollifierSpec:
    """Unit-mass bump kernel of radius ``epsilon``."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def kernel(self, grid: Grid) -> np.ndarray:
        """Kernel weights on lattice displacements in FFT order, summing to one."""
        h = grid.spacing
        idx = sfft.fftfreq(grid.N, d=1.0 / grid.N)
        disp = (idx[:, None] + 1j * idx[None, :]) * h
        w = bump_profile(np.abs(disp) / self.epsilon)
        return w / w.sum()


def check_epsilon(epsilon: float, grid: Grid) -> None:
    if epsilon < 2 * grid.spacing * (1 - 1e-12):
        raise GridError(
            f"mollification scale epsilon={epsilon:g} is below the floor "
            f"2*spacing={2 * grid.spacing:g}"
        )


def mollify(g: GridFunction, spec: MollifierSpec) -> GridFunction:
    """Circular convolution with the normalized bump of radius ``spec.epsilon``."""
    check_epsilon(spec.epsilon, g.grid)
    kern = sfft.fft2(spec.kernel(g.grid))
    out = GridFunction.from_spectrum(g.grid, g.spectrum() * kern)
    if np.isrealobj(g.values) or not np.any(g.values.imag):
        out = GridFunction(g.grid, out.values.real)
    return out


def mollified_radial_coefficients(K: float, grid: Grid, epsilon: float | None):
    """Coefficient pair ``(mu, nu)`` of the radial stretching, mollified at ``epsilon``."""
    from .operators import BeltramiCoefficients

    sample_ = radial_stretching(K, grid)
    mu = sample_.mu
    if epsilon is not None:
        mu = mollify(mu, MollifierSpec(epsilon))
    k = RadialStretching(K).k
    # convolution with a unit-mass positive kernel cannot raise the sup; rounding aside
    mu_abs = np.abs(mu.values)
    if mu_abs.max() > k:
        mu = GridFunction(grid, np.where(mu_abs > k, mu.values * (k / mu_abs), mu.values))
    return BeltramiCoefficients(mu, grid.zeros(), k)


def smooth_random_coefficients(grid: Grid, k: float, seed: int = 0, bandwidth: float = 1.0,
                               radius: float = 1.0):
    """Random band-limited ``(mu, nu)`` tapered to ``|z| < radius`` and scaled so that
    the sampled ``sup(|mu| + |nu|)`` equals ``k``."""
    from .grid import random_band_limited
    from .operators import BeltramiCoefficients

    rng = np.random.default_rng(seed)
    mu = random_band_limited(grid, rng, bandwidth, radius=radius)
    nu = random_band_limited(grid, rng, bandwidth, radius=radius)
    s = float(np.max(np.abs(mu.values) + np.abs(nu.values)))
    return BeltramiCoefficients(mu * (k / s), nu * (k / s), k)


# ---------------------------------------------------------------------------
# logarithm of d f


def log_derivative(sol: "SolutionField", min_modulus: float = 1e-8) -> GridFunction:
    """Continuous branch of ``log d f`` that vanishes where ``d f`` is 1 at the frame.

    The argument is unwrapped along the frame row ``i = 0`` first and then down every
    column from that row.  ``d f`` must be bounded away from zero.
    """
    df = sol.df.values
    mod = np.abs(df)
    if mod.min() <= min_modulus:
        i, j = map(int, np.unravel_index(np.argmin(mod), mod.shape))
        raise DegeneracyError(
            f"|d f| = {mod[i, j]:.3g} at sample ({i}, {j}); the solution degenerates at grid scale"
        )
    phase = np.angle(df)
    phase[0, :] = np.unwrap(phase[0, :])
    phase = np.unwrap(phase, axis=0)
    # pin the branch so that the argument on the frame is near 0 (d f -> 1 at infinity)
    frame = np.concatenate([phase[0, :], phase[-1, :], phase[:, 0], phase[:, -1]])
    phase -= 2 * np.pi * np.round(np.mean(frame) / (2 * np.pi))
    return GridFunction(sol.df.grid, np.log(mod) + 1j * phase)
