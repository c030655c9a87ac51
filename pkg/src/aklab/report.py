"""Deterministic CSV and SVG writers."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence
from xml.sax.saxutils import escape


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        if hasattr(value, "dtype") and value.dtype.kind in "iu":
            return str(int(value))
        if hasattr(value, "dtype") and value.dtype.kind == "b":
            return "true" if bool(value) else "false"
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(value)


def write_csv(path: Path, rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> int:
    """RFC 4180 CSV with 17 significant digits; returns the number of data rows."""
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\r\n")
        out.writerow(columns)
        for row in rows:
            out.writerow([format_cell(row.get(c)) for c in columns])
            n += 1
    return n


def svg_plot(
    path: Path,
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    hlines: Sequence[tuple[str, float]] = (),
    width: int = 640,
    height: int = 420,
) -> None:
    """Self-contained line/marker plot."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    xs = [float(x) for _, sx, _ in series for x in sx]
    ys = [float(y) for _, _, sy in series for y in sy if math.isfinite(float(y))]
    ys += [v for _, v in hlines if math.isfinite(v)]
    if not xs or not ys:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = 70, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return top + (y1 - y) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        parts.append(f'<text x="{px(xv):.1f}" y="{top + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{xv:.4g}</text>')
        parts.append(f'<text x="{left - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{yv:.4g}</text>')
    for j, (label, value) in enumerate(hlines):
        if math.isfinite(value):
            parts.append(
                f'<line x1="{left}" y1="{py(value):.2f}" x2="{left + pw}" y2="{py(value):.2f}" stroke="gray" stroke-dasharray="6,4"/>'
            )
            parts.append(f'<text x="{left + pw - 4}" y="{py(value) - 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="10">{escape(label)}</text>')
    for i, (label, sx, sy) in enumerate(series):
        c = colors[i % len(colors)]
        pts = [(px(float(x)), py(float(y))) for x, y in zip(sx, sy) if math.isfinite(float(y))]
        if len(pts) > 1:
            d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            parts.append(f'<polyline points="{d}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for a, b in pts:
            parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{c}"/>')
        parts.append(f'<text x="{left + 8}" y="{top + 16 + 14 * i}" font-family="sans-serif" font-size="11" fill="{c}">{escape(label)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
