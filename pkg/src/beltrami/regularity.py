"""Integrability measurements, exponent thresholds and the headline experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import Grid, GridFunction, lp_norm, random_band_limited, sobolev_norm
from .operators import BeltramiCoefficients, solve_beltrami


class ClassificationError(ValueError):
    """Parameters fall outside the hypotheses of every case of the regularity theorem."""


class InsufficientRangeError(ValueError):
    """The resolved dynamic range of a field is too narrow for a tail fit."""


# ---------------------------------------------------------------------------
# exponent thresholds


@dataclass(frozen=True)
class ThresholdQuery:
    """Inputs of the second-order regularity statement.

    ``p`` is the Sobolev exponent of the coefficients, ``r`` the exponent with
    ``f in L^{r/(r-1)}``.  ``part`` may be left ``None`` to pick the first case whose
    hypotheses hold.
    """

    K: float
    p: float
    r: float | None = None
    part: int | None = None
    mu_zero: bool = False


@dataclass(frozen=True)
class ExponentSet:
    """Admissible exponents ``s`` for ``f in W^{2,s}_loc``: ``s <= upper`` or ``s < upper``."""

    part: int
    upper: float
    closed: bool
    description: str

    def contains(self, s: float) -> bool:
        if s < 1:
            return False
        return s <= self.upper if self.closed else s < self.upper


def critical_exponent(K: float, p: float) -> float:
    """Open endpoint ``s*`` of ``1/s > 1/p + (K-1)/(2K)``."""
    return 1.0 / (1.0 / p + (K - 1.0) / (2.0 * K))


def _part_violations(q: ThresholdQuery, part: int) -> list[str]:
    K, p, r = q.K, q.p, q.r
    out = []
    if part == 1:
        if not p > 2:
            out.append(f"part 1 needs p > 2 (p={p:g})")
    elif part == 2:
        if p != 2:
            out.append(f"part 2 needs p = 2 (p={p:g})")
    elif part == 3:
        if not q.mu_zero:
            out.append("part 3 needs mu identically 0")
        lo = 2 * K / (K + 1)
        if not lo < p < 2:
            out.append(f"part 3 needs 2K/(K+1) = {lo:g} < p < 2 (p={p:g})")
    elif part == 4:
        if not K < 2:
            out.append(f"part 4 needs K < 2 (K={K:g})")
        if not K < p < 2:
            out.append(f"part 4 needs K < p < 2 (K={K:g}, p={p:g})")
    else:
        out.append(f"unknown part {part}")
    if part in (1, 2) and r is not None and not 1 < r < p:
        out.append(f"part {part} needs 1 < r < p (r={r:g}, p={p:g})")
    if part in (3, 4) and r is not None:
        bound = 1 / p + (K - 1) / (2 * K)
        if not 1 / r > bound:
            out.append(f"part {part} needs 1/r > 1/p + (K-1)/(2K) = {bound:g} (1/r={1 / r:g})")
    return out


def threshold_predict(q: ThresholdQuery) -> ExponentSet:
    if not q.K >= 1:
        raise ClassificationError(f"K must be >= 1 (K={q.K:g})")
    if not q.p > 1:
        raise ClassificationError(f"p must exceed 1 (p={q.p:g})")
    if q.part is not None:
        parts = [q.part]
    else:
        parts = [1, 2, 3, 4]
    problems: list[str] = []
    for part in parts:
        bad = _part_violations(q, part)
        if bad:
            problems.extend(bad)
            continue
        if part == 1:
            return ExponentSet(1, q.p, True, f"W^(2,{q.p:g})_loc: second derivatives in L^{q.p:g}")
        if part == 2:
            return ExponentSet(2, 2.0, False, "W^(2,q)_loc for every q < 2")
        s_star = critical_exponent(q.K, q.p)
        return ExponentSet(part, s_star, False,
                           f"W^(2,s)_loc for every s < s* = {s_star:.12g}")
    raise ClassificationError("; ".join(problems))


# ---------------------------------------------------------------------------
# weak-L^p tail exponent


@dataclass(frozen=True)
class TailFit:
    p_hat: float
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    levels: np.ndarray
    areas: np.ndarray

    @property
    def conclusive(self) -> bool:
        return self.r_squared >= 0.98

    def to_dict(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window_low": self.window[0],
            "window_high": self.window[1],
            "conclusive": self.conclusive,
        }


def resolved_window(g: GridFunction, region: np.ndarray | None = None, center: complex = 0.0,
                    min_radius: float | None = None) -> tuple[float, float]:
    """``(90th percentile of |g| on region, |g| at distance min_radius from center)``.

    ``min_radius`` defaults to four grid spacings; the upper value is the median of
    ``|g|`` over the one-cell-wide ring at that distance.
    """
    grid = g.grid
    if region is None:
        region = np.ones(grid.shape, dtype=bool)
    if min_radius is None:
        min_radius = 4 * grid.spacing
    a = np.abs(g.values)
    lo = float(np.percentile(a[region], 90))
    ring = grid.annulus_mask(min_radius, min_radius + grid.spacing, center) & region
    if not ring.any():
        raise InsufficientRangeError("no samples at the resolution radius inside the region")
    hi = float(np.median(a[ring]))
    return lo, hi


def tail_exponent(g: GridFunction, region: np.ndarray | None = None,
                  window: tuple[float, float] | None = None, *, center: complex = 0.0,
                  min_radius: float | None = None, trim: float = 0.05,
                  min_decades: float = 1.0, n_levels: int = 40) -> TailFit:
    """Fit ``area{|g| > lam} ~ C lam^(-p)`` over a window of levels; returns ``p`` as ``p_hat``."""
    grid = g.grid
    if region is None:
        region = np.ones(grid.shape, dtype=bool)
    if window is None:
        window = resolved_window(g, region, center, min_radius)
    lo, hi = window
    if not (lo > 0 and hi > lo) or math.log10(hi / lo) < min_decades:
        raise InsufficientRangeError(
            f"tail window [{lo:.4g}, {hi:.4g}] spans less than {min_decades:g} decade(s)"
        )
    span = math.log(hi / lo)
    log_lo, log_hi = math.log(lo) + trim * span, math.log(hi) - trim * span
    levels = np.exp(np.linspace(log_lo, log_hi, n_levels))
    a = np.sort(np.abs(g.values[region]))
    counts = a.size - np.searchsorted(a, levels, side="right")
    areas = counts * grid.cell_area
    if np.any(counts == 0):
        raise InsufficientRangeError("empty super-level sets inside the window")
    x, y = np.log(levels), np.log(areas)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return TailFit(-float(slope), float(slope), float(intercept), r2, (lo, hi), levels, areas)


# ---------------------------------------------------------------------------
# norm sequences and verdicts

FINITE = "finite"
DIVERGENT = "divergent"
INCONCLUSIVE = "inconclusive"


def classify_norms(values: Sequence[float], stable_tol: float = 0.10,
                   growth: float = 1.20) -> str:
    """Verdict for a norm sequence ordered from coarse to fine.

    ``finite`` when every successive ratio lies within ``stable_tol`` of 1,
    ``divergent`` when every ratio is at least ``growth``, otherwise ``inconclusive``.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return INCONCLUSIVE
    if not np.all(np.isfinite(v)):
        return DIVERGENT
    if np.all(v == 0):
        return FINITE
    if np.any(v <= 0):
        return INCONCLUSIVE
    ratios = v[1:] / v[:-1]
    if np.all(np.abs(ratios - 1) <= stable_tol):
        return FINITE
    if np.all(ratios >= growth):
        return DIVERGENT
    return INCONCLUSIVE


def increment_trend(values: Sequence[float]) -> float:
    """``(v3 - v2) / (v2 - v1)`` of the last three entries.

    Below 1 the increments shrink (a convergent sequence, possibly slowly); at or
    above 1 they do not.  A diagnostic only; verdicts use :func:`classify_norms`.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return float("nan")
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d1 == 0:
        return float("inf") if d2 else float("nan")
    return float(d2 / d1)


def second_derivative_modulus(sol) -> GridFunction:
    """``|dd f| + |d_bar d f| + |d_bar d_bar f|`` of a solution field."""
    from .solver import second_derivatives

    dd, dbd, dbdb = second_derivatives(sol)
    return GridFunction(dd.grid, np.abs(dd.values) + np.abs(dbd.values) + np.abs(dbdb.values))


@dataclass
class RegularityReport:
    experiment: str
    levels: list
    exponents: list[float]
    measured_norms: dict[float, list[float]]
    verdicts: dict[float, str]
    predicted_threshold: ExponentSet | None = None
    expected: dict[float, str] = field(default_factory=dict)
    tail: TailFit | None = None
    tail_note: str = ""
    trends: dict[float, float] = field(default_factory=dict)

    @property
    def tail_verdict(self) -> str:
        if self.tail is None:
            return INCONCLUSIVE
        return "conclusive" if self.tail.conclusive else INCONCLUSIVE

    def consistent(self) -> bool:
        """Every exponent with an expectation received exactly that verdict."""
        return all(self.verdicts.get(s) == v for s, v in self.expected.items())

    def rows(self) -> list[dict]:
        out = []
        for s in self.exponents:
            for level, value in zip(self.levels, self.measured_norms[s]):
                out.append({"experiment": self.experiment, "level": level,
                            "exponent": s, "value": value})
        return out

    def to_dict(self) -> dict:
        pred = None
        if self.predicted_threshold is not None:
            p = self.predicted_threshold
            pred = {"part": p.part, "upper": p.upper, "closed": p.closed,
                    "description": p.description}
        return {
            "experiment": self.experiment,
            "levels": list(self.levels),
            "exponents": list(self.exponents),
            "measured_norms": {repr(s): list(v) for s, v in self.measured_norms.items()},
            "verdicts": {repr(s): v for s, v in self.verdicts.items()},
            "expected": {repr(s): v for s, v in self.expected.items()},
            "increment_trend": {repr(s): v for s, v in self.trends.items()},
            "predicted_threshold": pred,
            "tail": None if self.tail is None else self.tail.to_dict(),
            "tail_verdict": self.tail_verdict,
            "tail_note": self.tail_note,
        }


RegionRule = Callable[[Grid], np.ndarray]


def regularity_report(fields: Sequence[GridFunction], exponents: Iterable[float],
                      query: ThresholdQuery | None = None, *, levels: Sequence | None = None,
                      region: RegionRule | None = None, experiment: str = "regularity",
                      tail_center: complex | None = None) -> RegularityReport:
    """L^s norms of pointwise second-derivative moduli across refinement levels.

    ``fields`` are ordered coarse to fine.  ``region`` maps a grid to the mask over
    which norms are taken (central quarter by default).  With ``tail_center`` a tail
    fit of the finest field around that point is attached.
    """
    fields = list(fields)
    exps = [float(s) for s in exponents]
    if levels is None:
        levels = [f.grid.N for f in fields]
    if region is None:
        region = lambda g: g.central_mask()
    norms = {s: [lp_norm(f, s, region(f.grid)) for f in fields] for s in exps}
    verdicts = {s: classify_norms(v) for s, v in norms.items()}
    trends = {s: increment_trend(v) for s, v in norms.items()}
    predicted = threshold_predict(query) if query is not None else None
    expected = {}
    if predicted is not None:
        expected = {s: FINITE if predicted.contains(s) else DIVERGENT for s in exps}
    tail, note = None, ""
    if tail_center is not None and fields:
        finest = fields[-1]
        try:
            tail = tail_exponent(finest, region(finest.grid), center=tail_center)
        except InsufficientRangeError as exc:
            note = str(exc)
    return RegularityReport(experiment, list(levels), exps, norms, verdicts, predicted,
                            expected, tail, note, trends)


# ---------------------------------------------------------------------------
# log of the derivative


@dataclass(frozen=True)
class LogDerivativeRow:
    epsilon: float
    eps_cells: float
    numerator: float       # || |d g| + |d_bar g| ||_p with g = log d f
    denominator: float     # || |d mu| + |d nu| ||_p
    ratio: float
    degenerate: bool
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def critical_interval(K: float) -> tuple[float, float]:
    """Open interval ``(2K/(K+1), 2K/(K-1))`` on which the log-derivative bound holds."""
    upper = math.inf if K == 1 else 2 * K / (K - 1)
    return 2 * K / (K + 1), upper


def log_derivative_experiment(K: float, p: float, eps_cells: Sequence[float] = (4, 8, 16),
                              N: int = 1024, L: float = 2.0,
                              tol: float = 1e-10) -> list[LogDerivativeRow]:
    """Ratio of ``||D log d f||_p`` to ``|| |d mu| + |d nu| ||_p`` per mollification scale."""
    from .analytic import log_derivative, mollified_radial_coefficients
    from .grid import d, d_bar, make_grid
    from .solver import principal_solution

    lo, hi = critical_interval(K)
    if not lo < p < hi:
        raise ClassificationError(
            f"p={p:g} lies outside the critical interval ({lo:g}, {hi:g}) for K={K:g}"
        )
    grid = make_grid(L, N, True)
    rows = []
    for c in eps_cells:
        eps = c * grid.spacing
        coef = mollified_radial_coefficients(K, grid, eps)
        sol = principal_solution(coef, tol)
        g = log_derivative(sol)
        num = lp_norm(GridFunction(grid, np.abs(d(g).values) + np.abs(d_bar(g).values)), p)
        den = lp_norm(GridFunction(grid, np.abs(d(coef.mu).values) + np.abs(d(coef.nu).values)), p)
        degenerate = den == 0
        ratio = float("nan") if degenerate else num / den
        rows.append(LogDerivativeRow(eps, float(c), num, den, ratio, degenerate,
                                     sol.report.iterations, sol.report.converged))
    return rows


def ratio_spread(rows: Sequence[LogDerivativeRow]) -> float:
    """``max / min`` of the finite ratios (nan when none are)."""
    r = np.array([row.ratio for row in rows if np.isfinite(row.ratio)])
    if r.size == 0 or r.min() <= 0:
        return float("nan")
    return float(r.max() / r.min())


# ---------------------------------------------------------------------------
# W^{1,q} invertibility probe


@dataclass(frozen=True)
class ProbeRow:
    N: int
    q: float
    max_ratio: float
    mean_ratio: float
    trials: int
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sobolev_invertibility_probe(coefs: BeltramiCoefficients | Sequence[BeltramiCoefficients],
                                q_list: Sequence[float], trials: int = 5, seed: int = 0,
                                bandwidth: float = 2.0, support: float | None = 1.5,
                                tol: float = 1e-10) -> list[ProbeRow]:
    """``sobolev_norm(w, 1, q) / sobolev_norm(g, 1, q)`` with ``(Id - mu B - nu conj B) w = g``.

    ``coefs`` may be one coefficient pair or the same pair sampled at several
    resolutions.  Each level draws the same number of random band-limited ``g`` from
    a generator seeded by ``seed``.
    """
    if isinstance(coefs, BeltramiCoefficients):
        coefs = [coefs]
    for q in q_list:
        if not 1 < q < 2:
            raise ValueError(f"q must lie in (1, 2), got {q}")
    rows = []
    for coef in coefs:
        grid = coef.grid
        rng = np.random.default_rng(seed)
        ratios = {q: [] for q in q_list}
        ok = True
        for _ in range(trials):
            g = random_band_limited(grid, rng, bandwidth, radius=support)
            w, report = solve_beltrami(coef, g, tol)
            ok = ok and report.converged
            for q in q_list:
                ratios[q].append(sobolev_norm(w, 1, q) / sobolev_norm(g, 1, q))
        for q in q_list:
            r = np.asarray(ratios[q])
            rows.append(ProbeRow(grid.N, float(q), float(r.max()), float(r.mean()), trials, ok))
    return rows
