"""Self-contained SVG line charts with mean +- 0.5 std bands."""

from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path
from xml.sax.saxutils import escape

from robustlab.errors import ParseError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
BAND_SCALE = 0.5
WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 150, "top": 40, "bottom": 50}


def read_csv_rows(path) -> list[dict]:
    """Rows of a CSV file whose ``#`` lines are comments.  Ragged rows raise ``ParseError``."""
    rows, header = [], None
    with open(path, newline="") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            (fields,) = csv.reader([line])
            if header is None:
                header = [h.strip() for h in fields]
                continue
            if len(fields) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(fields)}", lineno)
            row = dict(zip(header, fields))
            row["_line"] = lineno
            rows.append(row)
    if header is None:
        raise ParseError(f"{path}: no header row")
    return rows


def _num(row: dict, key: str) -> float:
    try:
        return float(row[key])
    except ValueError:
        raise ParseError(f"column {key!r} is not numeric: {row[key]!r}", row["_line"]) from None


def load_series(paths, x: str | None = None, y: str | None = None) -> dict:
    """``{label: (xs, ys, stds or None)}`` from aggregate or training-log CSVs.

    Aggregate files (with an ``algorithm`` column) give one series per
    algorithm over ``level``; training logs give one series per file over
    ``step`` using ``eval_return_mean``/``eval_return_std``.
    """
    series = {}
    for path in [paths] if isinstance(paths, (str, Path)) else paths:
        rows = read_csv_rows(path)
        if not rows:
            continue
        cols = set(rows[0])
        if "algorithm" in cols:
            xk, yk, sk = x or "level", y or "mean_return", "std_return"
            groups = {}
            for r in rows:
                groups.setdefault(r["algorithm"], []).append(r)
        else:
            xk, yk, sk = x or "step", y or "eval_return_mean", (y or "eval_return_mean").replace("mean", "std")
            groups = {Path(path).parent.name or Path(path).stem: rows}
        for key in (xk, yk):
            if key not in cols:
                raise ParseError(f"{path}: missing column {key!r}")
        has_std = sk in cols
        if not has_std:
            warnings.warn(f"{path}: no {sk!r} column; bands omitted", stacklevel=2)
        for label, grp in groups.items():
            grp = sorted(grp, key=lambda r: _num(r, xk))
            xs = [_num(r, xk) for r in grp]
            ys = [_num(r, yk) for r in grp]
            stds = [_num(r, sk) for r in grp] if has_std else None
            series[label] = (xs, ys, stds)
    return series


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(series: dict, title: str = "", xlabel: str = "", ylabel: str = "return") -> str:
    """SVG text; identical input gives identical output."""
    pts = [(x, y) for xs, ys, _ in series.values() for x, y in zip(xs, ys)]
    bands = []
    for xs, ys, stds in series.values():
        if stds:
            bands += [y + BAND_SCALE * s for y, s in zip(ys, stds)] + [y - BAND_SCALE * s for y, s in zip(ys, stds)]
    finite = [v for v in [p[1] for p in pts] + bands if math.isfinite(v)]
    x_lo = min((p[0] for p in pts), default=0.0)
    x_hi = max((p[0] for p in pts), default=1.0)
    y_lo, y_hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return MARGIN["top"] + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _ticks(x_lo, x_hi):
        out.append(f'<text x="{sx(t):.1f}" y="{y0 + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{t:.3g}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<text x="{x0 - 6}" y="{sy(t) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{t:.4g}</text>')
        out.append(f'<line x1="{x0}" y1="{sy(t):.1f}" x2="{x0 + pw}" y2="{sy(t):.1f}" stroke="#dddddd"/>')
    out.append(f'<text x="{x0 + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (label, (xs, ys, stds)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        if stds:
            upper = [f"{sx(x):.2f},{sy(y + BAND_SCALE * s):.2f}" for x, y, s in zip(xs, ys, stds)]
            lower = [f"{sx(x):.2f},{sy(y - BAND_SCALE * s):.2f}" for x, y, s in zip(xs, ys, stds)]
            d = "M " + " L ".join(upper + lower[::-1]) + " Z"
            out.append(f'<path class="band" d="{d}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = MARGIN["top"] + 16 * i + 8
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<rect x="{lx}" y="{ly - 8}" width="12" height="3" fill="{color}"/>')
        out.append(f'<text x="{lx + 18}" y="{ly - 3}" font-family="sans-serif" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(csv_paths, out_path=None, title: str = "", x: str | None = None, y: str | None = None) -> str:
    series = load_series(csv_paths, x=x, y=y)
    first = csv_paths if isinstance(csv_paths, (str, Path)) else csv_paths[0]
    rows = read_csv_rows(first)
    xlabel = x or ("perturbation level" if rows and "algorithm" in rows[0] else "step")
    svg = render_svg(series, title=title, xlabel=xlabel, ylabel=y or "mean return")
    if out_path is not None:
        Path(out_path).write_text(svg)
    return svg
