"""Run configuration: JSON schema, defaulting and exhaustive validation.

Precedence, lowest to highest: built-in defaults, the JSON config file, command-line
flags.  ``normalize`` never stops at the first problem; it returns every violation.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path

import numpy as np

DEFAULTS = {
    "grid": {"L": 4.0, "N": 512, "shifted": True},
    "coefficients": {"type": "radial_stretching", "K": 2.0, "epsilon": None},
    "experiment": {"type": "identities"},
    "tol": 1e-10,
    "seed": 0,
    "output": {"dir": "out", "formats": ["csv", "json"], "dump_fields": False},
}

COEFFICIENT_DEFAULTS = {
    "radial_stretching": {"K": 2.0, "epsilon": None},
    "constant_bump": {"mu0": 0.0, "nu0": 0.0, "R": 1.0},
    "file": {"mu": None, "nu": None},
}

EXPERIMENT_DEFAULTS = {
    "identities": {"trials": 20, "bandwidth": 2.0},
    "solve": {},
    "sharpness": {"eps_cells": 4.0, "region_radius": 0.7},
    "thresholds": {"K": 2.0, "p": 2.0, "r": None, "part": None, "mu_zero": False,
                   "exponents": [], "levels": [], "eps_cells": 4.0, "region_radius": 0.5},
    "logderiv": {"K": 2.0, "p": 1.8, "eps_cells": [4.0, 8.0, 16.0]},
    "probe-inverse": {"q": [1.5, 1.8, 1.95], "trials": 5, "levels": [], "eps_cells": 4.0},
}

FORMATS = ("csv", "json", "svg")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _complex(x):
    """Numbers or ``[re, im]`` pairs; ``None`` when neither."""
    if _is_num(x):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(_is_num(v) for v in x):
        return complex(x[0], x[1])
    return None


def _expand(raw: dict) -> tuple[dict, list[str]]:
    """Fill defaults, accepting bare-string shorthands for the tagged sections."""
    errors = []
    raw = copy.deepcopy(raw)
    for key in ("coefficients", "experiment"):
        if isinstance(raw.get(key), str):
            raw[key] = {"type": raw[key]}
    unknown = set(raw) - set(DEFAULTS)
    errors += [f"{k}: unknown key" for k in sorted(unknown)]
    cfg = _merge(DEFAULTS, {k: v for k, v in raw.items() if k in DEFAULTS})
    for key, table in (("coefficients", COEFFICIENT_DEFAULTS), ("experiment", EXPERIMENT_DEFAULTS)):
        section = cfg[key]
        if not isinstance(section, dict):
            errors.append(f"{key}: expected an object or a type name")
            cfg[key] = {"type": DEFAULTS[key]["type"]}
            continue
        given = raw.get(key, {}) if isinstance(raw.get(key), dict) else {}
        kind = section.get("type")
        if kind not in table:
            errors.append(f"{key}.type: must be one of {sorted(table)}, got {kind!r}")
            continue
        # do not inherit parameters of the default type when another type is chosen
        base = {"type": kind, **table[kind]}
        extra = set(given) - set(base)
        errors += [f"{key}.{k}: unknown key" for k in sorted(extra)]
        cfg[key] = _merge(base, {k: v for k, v in given.items() if k in base})
    return cfg, errors


def apply_overrides(cfg: dict, *, grid_n=None, grid_l=None, tol=None, seed=None,
                    output=None, formats=None) -> dict:
    cfg = copy.deepcopy(cfg)
    if grid_n is not None:
        cfg.setdefault("grid", {})["N"] = grid_n
    if grid_l is not None:
        cfg.setdefault("grid", {})["L"] = grid_l
    if tol is not None:
        cfg["tol"] = tol
    if seed is not None:
        cfg["seed"] = seed
    if output is not None:
        cfg.setdefault("output", {})["dir"] = output
    if formats is not None:
        cfg.setdefault("output", {})["formats"] = [s.strip() for s in formats.split(",") if s.strip()]
    return cfg


def _check_grid(g: dict, errors: list[str]):
    for k in set(g) - {"L", "N", "shifted"}:
        errors.append(f"grid.{k}: unknown key")
    N, L = g.get("N"), g.get("L")
    if not (isinstance(N, int) and not isinstance(N, bool)):
        errors.append(f"grid.N: must be an integer, got {N!r}")
    elif N < 8 or N & (N - 1):
        errors.append(f"grid.N: must be a power of two >= 8, got {N}")
    if not _is_num(L) or L <= 0:
        errors.append(f"grid.L: must be a positive number, got {L!r}")
    if not isinstance(g.get("shifted"), bool):
        errors.append(f"grid.shifted: must be true or false, got {g.get('shifted')!r}")


def _spacing(cfg: dict) -> float | None:
    g = cfg["grid"]
    if _is_num(g.get("L")) and isinstance(g.get("N"), int) and g["N"] > 0 and g["L"] > 0:
        return 2.0 * g["L"] / g["N"]
    return None


def _check_epsilon(eps, h, where: str, errors: list[str]):
    if not _is_num(eps) or eps <= 0:
        errors.append(f"{where}: must be a positive number, got {eps!r}")
    elif h is not None and eps < 2 * h * (1 - 1e-12):
        errors.append(f"{where}: epsilon={eps:g} is below the floor 2*spacing={2 * h:g}")


def _check_eps_cells(c, where: str, errors: list[str]):
    if not _is_num(c) or c < 2:
        errors.append(f"{where}: mollification scale must be at least 2 grid spacings, got {c!r}")


def _check_coefficients(c: dict, cfg: dict, errors: list[str]):
    h = _spacing(cfg)
    kind = c["type"]
    if kind == "radial_stretching":
        if not _is_num(c["K"]) or c["K"] < 1:
            errors.append(f"coefficients.K: must be a number >= 1, got {c['K']!r}")
        if c["epsilon"] is not None:
            _check_epsilon(c["epsilon"], h, "coefficients.epsilon", errors)
        if cfg["grid"].get("shifted") is False:
            errors.append("coefficients: radial_stretching needs a shifted grid (origin is singular)")
    elif kind == "constant_bump":
        mu0, nu0 = _complex(c["mu0"]), _complex(c["nu0"])
        if mu0 is None:
            errors.append(f"coefficients.mu0: must be a number or [re, im], got {c['mu0']!r}")
        if nu0 is None:
            errors.append(f"coefficients.nu0: must be a number or [re, im], got {c['nu0']!r}")
        if mu0 is not None and nu0 is not None and abs(mu0) + abs(nu0) >= 1:
            errors.append(f"coefficients: ellipticity violated: k={abs(mu0) + abs(nu0)!r}")
        if not _is_num(c["R"]) or c["R"] <= 0:
            errors.append(f"coefficients.R: must be a positive number, got {c['R']!r}")
        elif _is_num(cfg["grid"].get("L")) and c["R"] >= cfg["grid"]["L"]:
            errors.append(f"coefficients.R: bump radius {c['R']} must be below L={cfg['grid']['L']}")
    elif kind == "file":
        _check_files(c, cfg, errors)


def _check_files(c: dict, cfg: dict, errors: list[str]):
    from .grid import Grid, GridError
    from .io import FormatError, read_bgf1

    fields = {}
    for key in ("mu", "nu"):
        path = c.get(key)
        if not isinstance(path, str):
            errors.append(f"coefficients.{key}: a BGF1 file path is required")
            continue
        if not Path(path).is_file():
            errors.append(f"coefficients.{key}: file not found: {path}")
            continue
        try:
            fields[key] = read_bgf1(path)
        except (FormatError, GridError, OSError) as exc:
            errors.append(f"coefficients.{key}: not a valid BGF1 file: {exc}")
    if len(fields) == 2:
        mu, nu = fields["mu"], fields["nu"]
        if mu.grid != nu.grid:
            errors.append("coefficients: mu and nu files live on different grids")
            return
        g = cfg["grid"]
        try:
            want = Grid(g.get("L"), g.get("N"), g.get("shifted"))
        except (GridError, TypeError, ValueError):
            want = None
        if want is not None and want != mu.grid:
            errors.append(
                f"coefficients: file grid (L={mu.grid.L:g}, N={mu.grid.N}, "
                f"shifted={mu.grid.shifted}) differs from the configured grid"
            )
        k = float(np.max(np.abs(mu.values) + np.abs(nu.values)))
        if not k < 1:
            errors.append(f"coefficients: ellipticity violated: k={k!r}")


def _num_list(v, where: str, errors: list[str], lo=None, hi=None) -> None:
    if not isinstance(v, list) or not all(_is_num(x) for x in v):
        errors.append(f"{where}: must be a list of numbers, got {v!r}")
        return
    for x in v:
        if (lo is not None and not x > lo) or (hi is not None and not x < hi):
            errors.append(f"{where}: value {x!r} outside ({lo}, {hi})")


def _check_levels(v, where: str, errors: list[str]):
    if not isinstance(v, list) or not all(isinstance(n, int) and not isinstance(n, bool) for n in v):
        errors.append(f"{where}: must be a list of integers, got {v!r}")
        return
    for n in v:
        if n < 8 or n & (n - 1):
            errors.append(f"{where}: {n} is not a power of two >= 8")


def _check_experiment(e: dict, cfg: dict, errors: list[str]):
    kind = e["type"]
    if kind == "identities":
        if not isinstance(e["trials"], int) or e["trials"] < 1:
            errors.append(f"experiment.trials: must be a positive integer, got {e['trials']!r}")
        if not _is_num(e["bandwidth"]) or e["bandwidth"] <= 0:
            errors.append(f"experiment.bandwidth: must be positive, got {e['bandwidth']!r}")
    elif kind == "sharpness":
        if cfg["coefficients"]["type"] != "radial_stretching":
            errors.append("experiment: sharpness needs radial_stretching coefficients")
        _check_eps_cells(e["eps_cells"], "experiment.eps_cells", errors)
        if not _is_num(e["region_radius"]) or not 0 < e["region_radius"] < 1:
            errors.append(f"experiment.region_radius: must lie in (0, 1), got {e['region_radius']!r}")
    elif kind == "thresholds":
        if not _is_num(e["K"]) or e["K"] < 1:
            errors.append(f"experiment.K: must be a number >= 1, got {e['K']!r}")
        if not _is_num(e["p"]) or e["p"] <= 1:
            errors.append(f"experiment.p: must be a number > 1, got {e['p']!r}")
        if e["r"] is not None and (not _is_num(e["r"]) or e["r"] <= 1):
            errors.append(f"experiment.r: must be a number > 1 or null, got {e['r']!r}")
        if e["part"] not in (None, 1, 2, 3, 4):
            errors.append(f"experiment.part: must be 1, 2, 3, 4 or null, got {e['part']!r}")
        if not isinstance(e["mu_zero"], bool):
            errors.append(f"experiment.mu_zero: must be true or false, got {e['mu_zero']!r}")
        _num_list(e["exponents"], "experiment.exponents", errors, lo=1)
        _check_levels(e["levels"], "experiment.levels", errors)
        _check_eps_cells(e["eps_cells"], "experiment.eps_cells", errors)
        if e["exponents"] and e["levels"] and cfg["coefficients"]["type"] != "radial_stretching":
            errors.append("experiment: norm measurements need radial_stretching coefficients")
    elif kind == "logderiv":
        if not _is_num(e["K"]) or e["K"] < 1:
            errors.append(f"experiment.K: must be a number >= 1, got {e['K']!r}")
        if not _is_num(e["p"]) or e["p"] <= 1:
            errors.append(f"experiment.p: must be a number > 1, got {e['p']!r}")
        if isinstance(e["eps_cells"], list):
            for c in e["eps_cells"]:
                _check_eps_cells(c, "experiment.eps_cells", errors)
        else:
            errors.append(f"experiment.eps_cells: must be a list, got {e['eps_cells']!r}")
    elif kind == "probe-inverse":
        _num_list(e["q"], "experiment.q", errors, lo=1, hi=2)
        if not isinstance(e["trials"], int) or e["trials"] < 1:
            errors.append(f"experiment.trials: must be a positive integer, got {e['trials']!r}")
        _check_levels(e["levels"], "experiment.levels", errors)
        _check_eps_cells(e["eps_cells"], "experiment.eps_cells", errors)
        if e["levels"] and cfg["coefficients"]["type"] == "file":
            errors.append("experiment.levels: file coefficients exist at one resolution only")


def normalize(raw: dict) -> dict:
    """Fully defaulted, validated config; raises :class:`ConfigError` listing every problem."""
    if not isinstance(raw, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    cfg, errors = _expand(raw)
    if isinstance(cfg.get("grid"), dict):
        _check_grid(cfg["grid"], errors)
    else:
        errors.append("grid: expected an object")
        cfg["grid"] = dict(DEFAULTS["grid"])
    if not _is_num(cfg["tol"]) or cfg["tol"] <= 0:
        errors.append(f"tol: must be a positive number, got {cfg['tol']!r}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        errors.append(f"seed: must be a non-negative integer, got {cfg['seed']!r}")
    out = cfg["output"]
    if not isinstance(out, dict):
        errors.append("output: expected an object")
    else:
        for k in set(out) - set(DEFAULTS["output"]):
            errors.append(f"output.{k}: unknown key")
        if not isinstance(out.get("dir"), str) or not out["dir"]:
            errors.append(f"output.dir: must be a non-empty string, got {out.get('dir')!r}")
        fm = out.get("formats")
        if not isinstance(fm, list) or not fm or any(f not in FORMATS for f in fm):
            errors.append(f"output.formats: must be a non-empty subset of {list(FORMATS)}, got {fm!r}")
        else:
            out["formats"] = [f for f in FORMATS if f in fm]
        if not isinstance(out.get("dump_fields"), bool):
            errors.append(f"output.dump_fields: must be true or false, got {out.get('dump_fields')!r}")
    if "type" in cfg["coefficients"] and cfg["coefficients"]["type"] in COEFFICIENT_DEFAULTS:
        _check_coefficients(cfg["coefficients"], cfg, errors)
    if "type" in cfg["experiment"] and cfg["experiment"]["type"] in EXPERIMENT_DEFAULTS:
        _check_experiment(cfg["experiment"], cfg, errors)
    if errors:
        raise ConfigError(errors)
    cfg["grid"]["L"] = float(cfg["grid"]["L"])
    cfg["tol"] = float(cfg["tol"])
    return cfg
