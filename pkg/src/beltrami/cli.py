"""Command line: ``beltrami validate`` and ``beltrami run``.

Errors go to stderr as one JSON line ``{"code": ..., "kind": ..., "errors": [...]}``.
Exit codes: 0 ok, 2 config error, 3 non-convergence, 4 I/O error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ConfigError, apply_overrides, normalize
from .io import dumps_json

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_IO = 0, 2, 3, 4


def _fail(code: int, kind: str, errors: list[str]):
    click.echo(json.dumps({"code": code, "kind": kind, "errors": errors}), err=True)
    sys.exit(code)


def _load(config_path: str | None, overrides: dict) -> dict:
    raw = {}
    if config_path is not None:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as exc:
            _fail(EXIT_IO, "io", [f"cannot read config {config_path}: {exc.strerror or exc}"])
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            _fail(EXIT_CONFIG, "config", [f"config is not valid JSON: {exc}"])
    try:
        return normalize(apply_overrides(raw, **overrides))
    except ConfigError as exc:
        _fail(EXIT_CONFIG, "config", exc.errors)


def _common(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="JSON run configuration."),
        click.option("--output", default=None, help="Output directory."),
        click.option("--grid-n", type=int, default=None, help="Samples per axis (power of two)."),
        click.option("--grid-l", type=float, default=None, help="Half-side of the square."),
        click.option("--tol", type=float, default=None, help="Absolute L2 residual tolerance."),
        click.option("--seed", type=int, default=None, help="Seed for random test fields."),
        click.option("--formats", default=None, help="Comma-separated subset of csv,json,svg."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Spectral Beltrami solver experiments."""


@main.command()
@click.argument("config_file", required=False, type=click.Path(dir_okay=False))
@_common
def validate(config_file, config_path, **overrides):
    """Print the fully defaulted config as canonical JSON; compute nothing."""
    cfg = _load(config_path or config_file, overrides)
    click.echo(dumps_json(cfg), nl=False)


@main.command()
@click.argument("config_file", required=False, type=click.Path(dir_okay=False))
@_common
def run(config_file, config_path, **overrides):
    """Run the configured experiment and write artifacts plus manifest.json."""
    from .analytic import DegeneracyError
    from .experiments import RUNNERS, write_outcome
    from .regularity import ClassificationError

    cfg = _load(config_path or config_file, overrides)
    try:
        outcome = RUNNERS[cfg["experiment"]["type"]](cfg)
    except (ClassificationError, DegeneracyError) as exc:
        _fail(EXIT_CONFIG, "config", [str(exc)])
    try:
        manifest = write_outcome(cfg, outcome)
    except OSError as exc:
        _fail(EXIT_IO, "io", [f"cannot write artifacts: {exc}"])
    click.echo(str(manifest))
    if not outcome.converged:
        _fail(EXIT_NONCONVERGENCE, "nonconvergence",
              ["solver did not reach the tolerance; partial artifacts kept with converged=false"])


if __name__ == "__main__":
    main()
