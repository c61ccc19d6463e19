"""Reading series and matrices, writing tables in table/csv/json form."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .kernels import KnotGrid

FORMATS = ("table", "csv", "json")


@dataclass(frozen=True)
class Series:
    grid: KnotGrid
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.grid.knots

    def __len__(self) -> int:
        return self.values.size


def _data_rows(text: str):
    """Yield ``(line_number, fields)`` for non-blank, non-comment lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, next(csv.reader([stripped]))


def _number(text: str, lineno: int, what: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(f"{what} {text.strip()!r} is not a number", lineno) from None
    if not math.isfinite(x):
        raise ParseError(f"{what} {text.strip()!r} is not finite", lineno)
    return x


def parse_series(text: str) -> Series:
    """Parse two-column ``time,value`` CSV; an optional header row is skipped."""
    times, values = [], []
    first = True
    for lineno, fields in _data_rows(text):
        if len(fields) != 2:
            raise ParseError(f"expected 2 columns (time,value), got {len(fields)}", lineno)
        if first:
            first = False
            try:
                float(fields[0])
            except ValueError:
                continue  # header
        t = _number(fields[0], lineno, "time")
        v = _number(fields[1], lineno, "value")
        if times and t <= times[-1]:
            kind = "duplicate" if t == times[-1] else "decreasing"
            raise ParseError(f"{kind} time {fields[0].strip()} (times must be strictly increasing)", lineno)
        times.append(t)
        values.append(v)
    if len(times) < 2:
        raise ParseError("a series needs at least two rows")
    return Series(KnotGrid(times), np.array(values))


def read_series(path) -> Series:
    with open(path, encoding="utf-8") as fh:
        return parse_series(fh.read())


def parse_matrix(text: str) -> np.ndarray:
    """Parse a comma separated numeric matrix (``#`` comments allowed)."""
    rows = []
    for lineno, fields in _data_rows(text):
        rows.append([_number(x, lineno, "entry") for x in fields])
        if len(rows[-1]) != len(rows[0]):
            raise ParseError(f"row has {len(rows[-1])} entries, expected {len(rows[0])}", lineno)
    if not rows:
        raise ParseError("matrix file is empty")
    return np.array(rows)


def read_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return parse_matrix(fh.read())


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def render_rows(columns, rows, out_format: str, title: str | None = None) -> str:
    """Render a list of row tuples as an aligned table or CSV."""
    if out_format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
        return buf.getvalue()
    if out_format == "json":
        return dumps_json([dict(zip(columns, row)) for row in rows])
    cells = [list(columns)] + [[_short(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = [title] if title else []
    for k, r in enumerate(cells):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _short(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".7g")
    return fmt(x)


def render_matrices(blocks, out_format: str) -> str:
    """Render named matrices; ``blocks`` is a list of ``(name, matrix, classification)``."""
    if out_format == "json":
        return dumps_json(
            {
                name: {"shape": list(M.shape), "classification": cls, "data": M}
                for name, M, cls in blocks
            }
        )
    out = []
    for name, M, cls in blocks:
        out.append(f"# {name} {M.shape[0]}x{M.shape[1]} {cls}\n")
        if out_format == "csv":
            out.extend(",".join(fmt(x) for x in row) + "\n" for row in M)
        else:
            out.extend("  ".join(f"{x: .6e}" for x in row) + "\n" for row in M)
        out.append("\n" if out_format == "table" else "")
    return "".join(out)


def parse_matrix_dump(text: str) -> dict[str, np.ndarray]:
    """Inverse of :func:`render_matrices` for the csv format."""
    blocks: dict[str, list[list[float]]] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("# "):
            current = line[2:].split()[0]
            blocks[current] = []
        elif line.strip():
            if current is None:
                raise ParseError("data row before any matrix header", lineno)
            blocks[current].append([_number(x, lineno, "entry") for x in line.split(",")])
    return {k: np.array(v) for k, v in blocks.items()}
