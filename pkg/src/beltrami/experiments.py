"""Experiment runners behind the command line.

Every runner returns an :class:`Outcome`: tables to write (name -> columns, rows),
a JSON summary, optional plots, and whether every solve converged.  Writing,
hashing and the manifest are handled by :func:`write_outcome`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .analytic import cutoff, mollified_radial_coefficients, radial_stretching
from .grid import Grid, GridFunction, lp_norm, make_grid
from .io import dumps_json, sha256_file, write_csv, write_json, write_solution
from .operators import BeltramiCoefficients
from .regularity import (
    InsufficientRangeError,
    ThresholdQuery,
    log_derivative_experiment,
    ratio_spread,
    regularity_report,
    second_derivative_modulus,
    sobolev_invertibility_probe,
    tail_exponent,
    threshold_predict,
)
from .solver import (
    distortion_check,
    pde_residual,
    principal_solution,
    second_derivative_consistency,
)
from .transforms import identity_residuals


@dataclass
class Table:
    columns: list[str]
    rows: list[dict]


@dataclass
class Outcome:
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    plots: dict[str, Callable] = field(default_factory=dict)
    solutions: dict[str, object] = field(default_factory=dict)
    converged: bool = True


def build_grid(cfg: dict, N: int | None = None) -> Grid:
    g = cfg["grid"]
    return make_grid(g["L"], N if N is not None else g["N"], g["shifted"])


def build_coefficients(cfg: dict, grid: Grid, eps_cells: float | None = None) -> BeltramiCoefficients:
    c = cfg["coefficients"]
    kind = c["type"]
    if kind == "radial_stretching":
        eps = c["epsilon"]
        if eps_cells is not None:
            eps = eps_cells * grid.spacing
        return mollified_radial_coefficients(c["K"], grid, eps)
    if kind == "constant_bump":
        mu0, nu0 = (complex(*v) if isinstance(v, list) else complex(v) for v in (c["mu0"], c["nu0"]))
        psi = cutoff(grid, c["R"])
        return BeltramiCoefficients(psi * mu0, psi * nu0, abs(mu0) + abs(nu0))
    from .io import read_bgf1

    return BeltramiCoefficients.from_fields(read_bgf1(c["mu"]), read_bgf1(c["nu"]))


# ---------------------------------------------------------------------------
# runners


def run_identities(cfg: dict) -> Outcome:
    e = cfg["experiment"]
    grid = build_grid(cfg)
    rows = identity_residuals(grid, np.random.default_rng(cfg["seed"]), e["trials"], e["bandwidth"])
    worst = {}
    for r in rows:
        worst[r["identity"]] = max(worst.get(r["identity"], 0.0), r["residual"])
    return Outcome(
        tables={"identities": Table(["trial", "identity", "residual"], rows)},
        summary={"max_residual": worst},
    )


def _residual_plot(residuals: list[float]):
    def draw(ax):
        r = np.asarray(residuals)
        plot = ax.semilogy if np.any(r > 0) else ax.plot
        plot(np.arange(1, r.size + 1), r, "o-")
        ax.set_xlabel("iteration")
        ax.set_ylabel("L2 residual")
    return draw


def run_solve(cfg: dict) -> Outcome:
    grid = build_grid(cfg)
    coef = build_coefficients(cfg, grid)
    sol = principal_solution(coef, cfg["tol"])
    rep = sol.report
    rows = [{"iteration": i + 1, "residual": r} for i, r in enumerate(rep.residuals)]
    summary = {
        "k": coef.k,
        "K": coef.K,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "final_residual": rep.residuals[-1] if rep.residuals else 0.0,
        "pde_residual": lp_norm(pde_residual(sol, coef), 2),
        "distortion": distortion_check(sol, coef.k),
        "second_derivative_consistency": second_derivative_consistency(sol),
        "remainder_max": sol.f.max_abs(),
    }
    return Outcome(
        tables={"residuals": Table(["iteration", "residual"], rows)},
        summary=summary,
        plots={"residuals": _residual_plot(rep.residuals)},
        solutions={"solution": sol},
        converged=rep.converged,
    )


def _tail_plot(fits: dict):
    def draw(ax):
        for label, fit in fits.items():
            ax.loglog(fit.levels, fit.areas, "o", ms=3, label=f"{label}: p={fit.p_hat:.3f}")
            ax.loglog(fit.levels, np.exp(fit.intercept) * fit.levels ** fit.slope, "-", lw=1)
        ax.set_xlabel("level")
        ax.set_ylabel("area above level")
        ax.legend()
    return draw


def run_sharpness(cfg: dict) -> Outcome:
    e = cfg["experiment"]
    K = cfg["coefficients"]["K"]
    grid = build_grid(cfg)
    region = grid.disk_mask(e["region_radius"])
    sample_ = radial_stretching(K, grid)
    closed = GridFunction(grid, sample_.model.second_derivative_modulus(grid.z))
    coef = build_coefficients(cfg, grid, e["eps_cells"])
    sol = principal_solution(coef, cfg["tol"])
    fields = {"closed_form": closed, "solver": second_derivative_modulus(sol)}
    rows, fits = [], {}
    predicted = 2 * K / (2 * K - 1)
    for label, g in fields.items():
        row = {"field": label, "K": K, "N": grid.N, "L": grid.L, "predicted": predicted}
        try:
            fit = tail_exponent(g, region)
        except InsufficientRangeError as exc:
            row.update(p_hat=float("nan"), r_squared=float("nan"), conclusive=False, note=str(exc))
        else:
            fits[label] = fit
            row.update(p_hat=fit.p_hat, r_squared=fit.r_squared, conclusive=fit.conclusive,
                       window_low=fit.window[0], window_high=fit.window[1], note="")
        rows.append(row)
    cols = ["field", "K", "N", "L", "p_hat", "predicted", "r_squared", "conclusive",
            "window_low", "window_high", "note"]
    return Outcome(
        tables={"sharpness": Table(cols, rows)},
        summary={"rows": rows, "iterations": sol.report.iterations},
        plots={"sharpness": _tail_plot(fits)} if fits else {},
        converged=sol.report.converged,
    )


def run_thresholds(cfg: dict) -> Outcome:
    e = cfg["experiment"]
    q = ThresholdQuery(e["K"], e["p"], e["r"], e["part"], e["mu_zero"])
    pred = threshold_predict(q)
    row = {"K": q.K, "p": q.p, "r": q.r, "part": pred.part, "upper": pred.upper,
           "closed": pred.closed, "description": pred.description}
    out = Outcome(tables={"thresholds": Table(list(row), [row])}, summary={"prediction": row})
    if e["exponents"] and e["levels"]:
        fields, ok = [], True
        for N in e["levels"]:
            grid = build_grid(cfg, N)
            sol = principal_solution(build_coefficients(cfg, grid, e["eps_cells"]), cfg["tol"])
            ok = ok and sol.report.converged
            fields.append(second_derivative_modulus(sol))
        radius = e["region_radius"]
        rep = regularity_report(fields, e["exponents"], q, region=lambda g: g.disk_mask(radius),
                                experiment="thresholds")
        out.tables["norms"] = Table(["experiment", "level", "exponent", "value"], rep.rows())
        out.summary["regularity"] = rep.to_dict()
        out.converged = ok
    return out


def run_logderiv(cfg: dict) -> Outcome:
    e = cfg["experiment"]
    g = cfg["grid"]
    rows = log_derivative_experiment(e["K"], e["p"], e["eps_cells"], g["N"], g["L"], cfg["tol"])
    dicts = [r.to_dict() for r in rows]
    cols = ["epsilon", "eps_cells", "numerator", "denominator", "ratio", "degenerate",
            "iterations", "converged"]

    def draw(ax):
        ax.semilogx([r.epsilon for r in rows], [r.ratio for r in rows], "o-")
        ax.set_xlabel("mollification scale")
        ax.set_ylabel("ratio")

    return Outcome(
        tables={"logderiv": Table(cols, dicts)},
        summary={"rows": dicts, "max_over_min": ratio_spread(rows)},
        plots={"logderiv": draw},
        converged=all(r.converged for r in rows),
    )


def run_probe(cfg: dict) -> Outcome:
    e = cfg["experiment"]
    levels = e["levels"] or [cfg["grid"]["N"]]
    eps_cells = e["eps_cells"] if cfg["coefficients"]["type"] == "radial_stretching" else None
    coefs = [build_coefficients(cfg, build_grid(cfg, N), eps_cells) for N in levels]
    rows = sobolev_invertibility_probe(coefs, e["q"], e["trials"], cfg["seed"], tol=cfg["tol"])
    dicts = [r.to_dict() for r in rows]
    return Outcome(
        tables={"probe": Table(["N", "q", "max_ratio", "mean_ratio", "trials", "converged"], dicts)},
        summary={"rows": dicts},
        converged=all(r.converged for r in rows),
    )


RUNNERS = {
    "identities": run_identities,
    "solve": run_solve,
    "sharpness": run_sharpness,
    "thresholds": run_thresholds,
    "logderiv": run_logderiv,
    "probe-inverse": run_probe,
}


# ---------------------------------------------------------------------------
# writing


def _save_svg(path: Path, draw: Callable) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "beltrami", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        draw(ax)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def write_outcome(cfg: dict, outcome: Outcome) -> Path:
    """Write every artifact into ``cfg['output']['dir']`` and return the manifest path."""
    out_dir = Path(cfg["output"]["dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = cfg["output"]["formats"]
    kind = cfg["experiment"]["type"]
    files: list[tuple[Path, dict]] = []
    if "csv" in formats:
        for name, table in outcome.tables.items():
            p = write_csv(out_dir / f"{name}.csv", table.rows, table.columns)
            files.append((p, {"kind": "csv", "columns": table.columns}))
    if "json" in formats:
        summary = {"experiment": kind, "converged": outcome.converged, "seed": cfg["seed"],
                   **outcome.summary}
        files.append((write_json(out_dir / "summary.json", summary), {"kind": "json"}))
    if "svg" in formats:
        for name, draw in outcome.plots.items():
            p = out_dir / f"{name}.svg"
            _save_svg(p, draw)
            files.append((p, {"kind": "svg"}))
    if cfg["output"]["dump_fields"]:
        for name, sol in outcome.solutions.items():
            for p in write_solution(out_dir / name, sol):
                files.append((p, {"kind": "bgf1" if p.suffix == ".bgf" else "json"}))
    manifest = {
        "version": __version__,
        "experiment": kind,
        "seed": cfg["seed"],
        "converged": outcome.converged,
        "config": cfg,
        "files": [
            {"name": p.name, "sha256": sha256_file(p), "bytes": p.stat().st_size, **meta}
            for p, meta in files
        ],
    }
    path = out_dir / "manifest.json"
    path.write_text(dumps_json(manifest), encoding="utf-8")
    return path
