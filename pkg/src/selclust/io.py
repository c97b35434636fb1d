"""CSV, JSON and SVG input/output."""

from __future__ import annotations

import csv
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .exceptions import DataError


def _parse_row(cells: list[str], lineno: int) -> list[float]:
    out = []
    for col, cell in enumerate(cells, start=1):
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"line {lineno}, column {col}: {cell.strip()!r} is not a number") from None
        if not math.isfinite(v):
            raise DataError(f"line {lineno}, column {col}: non-finite value {cell.strip()!r}")
        out.append(v)
    return out


def _is_header(cells: list[str]) -> bool:
    for cell in cells:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def load_csv(path) -> np.ndarray:
    """Numeric matrix from a comma-separated file, one observation per row.

    A single non-numeric first line is taken as a header. Blank lines are
    skipped.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read ({exc})") from None
    rows, width = [], None
    for lineno, cells in enumerate(csv.reader(text.splitlines()), start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if not rows and width is None and _is_header(cells):
            width = len(cells)
            continue
        if width is not None and len(cells) != width:
            raise DataError(f"line {lineno}: expected {width} columns, found {len(cells)}")
        width = len(cells)
        rows.append(_parse_row(cells, lineno))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def write_csv(path, matrix, header: list[str] | None = None) -> None:
    """Write with 17 significant digits, enough to read every double back exactly."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path=None) -> None:
    """Write to ``path``, or to stdout when ``path`` is None or ``-``."""
    text = dumps_json(obj)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def load_schema(name: str) -> dict:
    """One of the JSON schemas shipped with the package (``test_result``, ``sim_report``, ...)."""
    ref = resources.files("selclust") / "schemas" / f"{name}.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def qq_svg(p_values, title: str = "", size: int = 400) -> str:
    """Sorted p-values against uniform quantiles, with the diagonal for reference.

    The output depends only on the inputs, so equal inputs give equal bytes.
    """
    p = np.sort(np.asarray(p_values, dtype=np.float64))
    m = p.size
    pad = 40
    span = size - 2 * pad

    def sx(u):
        return pad + u * span

    def sy(v):
        return size - pad - v * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{sx(0):.2f}" y1="{sy(0):.2f}" x2="{sx(1):.2f}" y2="{sy(1):.2f}" stroke="grey" stroke-dasharray="4 3"/>',
    ]
    for i, v in enumerate(p):
        u = (i + 1) / (m + 1)
        parts.append(f'<circle cx="{sx(u):.2f}" cy="{sy(v):.2f}" r="1.5" fill="steelblue"/>')
    parts.append(f'<text x="{size / 2:.0f}" y="{size - 8}" text-anchor="middle" font-size="12">Uniform quantile</text>')
    parts.append(
        f'<text x="12" y="{size / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size / 2:.0f})">p-value quantile</text>'
    )
    if title:
        safe = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        parts.append(f'<text x="{size / 2:.0f}" y="24" text-anchor="middle" font-size="13">{safe}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_qq_svg(path, p_values, title: str = "") -> None:
    Path(path).write_text(qq_svg(p_values, title), encoding="utf-8")
