"""BGF1 binary grid dumps, solution-field bundles and small output helpers."""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .grid import Grid, GridFunction
from .operators import SolveReport

MAGIC = b"BGF1"
_HEADER = struct.Struct("<4sIdB")


class FormatError(ValueError):
    """A BGF1 payload is malformed."""


def encode_bgf1(f: GridFunction) -> bytes:
    g = f.grid
    head = _HEADER.pack(MAGIC, g.N, g.L, int(g.shifted))
    body = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
    return head + body


def decode_bgf1(data: bytes, offset: int = 0) -> tuple[GridFunction, int]:
    """Parse one BGF1 block starting at ``offset``; returns the field and the next offset."""
    if len(data) - offset < _HEADER.size:
        raise FormatError("truncated BGF1 header")
    magic, N, L, shifted = _HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if shifted not in (0, 1):
        raise FormatError(f"shifted flag must be 0 or 1, got {shifted}")
    grid = Grid(L, N, bool(shifted))
    start = offset + _HEADER.size
    nbytes = N * N * 16
    if len(data) - start < nbytes:
        raise FormatError(f"truncated BGF1 payload: expected {nbytes} bytes, got {len(data) - start}")
    vals = np.frombuffer(data, dtype="<c16", count=N * N, offset=start).reshape(N, N)
    return GridFunction(grid, vals), start + nbytes


def write_bgf1(path: str | Path, f: GridFunction) -> Path:
    path = Path(path)
    path.write_bytes(encode_bgf1(f))
    return path


def read_bgf1(path: str | Path) -> GridFunction:
    data = Path(path).read_bytes()
    f, end = decode_bgf1(data)
    if end != len(data):
        raise FormatError(f"{len(data) - end} trailing bytes after BGF1 block")
    return f


def write_solution(stem: str | Path, sol) -> list[Path]:
    """Dump ``f``, ``df``, ``dbarf`` as three BGF1 blocks in ``<stem>.bgf`` plus ``<stem>.json``."""
    stem = Path(stem)
    bin_path = stem.with_suffix(".bgf")
    bin_path.write_bytes(b"".join(encode_bgf1(x) for x in (sol.f, sol.df, sol.dbarf)))
    meta = {"normalization": sol.normalization, "blocks": ["f", "df", "dbarf"],
            **sol.report.to_dict()}
    json_path = stem.with_suffix(".json")
    write_json(json_path, meta)
    return [bin_path, json_path]


def read_solution(stem: str | Path):
    from .solver import SolutionField

    stem = Path(stem)
    data = stem.with_suffix(".bgf").read_bytes()
    blocks, off = [], 0
    for _ in range(3):
        f, off = decode_bgf1(data, off)
        blocks.append(f)
    if off != len(data):
        raise FormatError("trailing bytes after the third BGF1 block")
    meta = json.loads(stem.with_suffix(".json").read_text())
    return SolutionField(*blocks, normalization=meta["normalization"],
                         report=SolveReport.from_dict(meta))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if not np.isfinite(x):
            return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, shortest round-trip floats."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: str | Path, rows: list[dict], columns: list[str]) -> Path:
    """UTF-8 CSV with a header row; floats written with ``repr`` (exact round trip)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
