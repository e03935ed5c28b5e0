"""CSV and SVG writers for metric series.

CSV columns, in order::

    iter, floats_values_only, floats_with_indices, worst_loss, mean_loss,
    consensus_gap, grad_norm_sq, optimality_gap, train_accuracy, wallclock_ms

Reals are printed with 17 significant digits, so parsing is lossless.
Absent metrics are empty fields.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, fields
from pathlib import Path
from xml.sax.saxutils import escape

from .engine import MetricsRecord

__all__ = ["CSV_HEADER", "PLOT_METRICS", "emit_csv", "read_csv", "emit_svg"]

CSV_HEADER = tuple(f.name for f in fields(MetricsRecord))
INT_COLUMNS = ("iter", "floats_values_only", "floats_with_indices")
PLOT_METRICS = ("worst_loss", "consensus_gap", "grad_norm_sq", "optimality_gap")

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def emit_csv(records: list[MetricsRecord], path) -> Path:
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow([_cell(v) for v in astuple(rec)])
    return path


def read_csv(path) -> list[MetricsRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            values = {}
            for key, text in row.items():
                if text == "":
                    values[key] = None
                elif key in INT_COLUMNS:
                    values[key] = int(text)
                else:
                    values[key] = float(text)
            out.append(MetricsRecord(**values))
    return out


def emit_svg(
    series: dict[str, list[MetricsRecord]] | list[MetricsRecord],
    path,
    x_axis: str = "iteration",
    metric: str = "consensus_gap",
    width: int = 640,
    height: int = 400,
) -> Path:
    """Log-y line plot of ``metric``; one ``<polyline>`` per labelled run, plus a legend.

    ``x_axis`` is ``"iteration"`` or ``"floats"`` (values-only count).
    Non-positive or missing values are skipped.
    """
    if x_axis not in ("iteration", "floats"):
        raise ValueError(f"x_axis must be 'iteration' or 'floats', got {x_axis!r}")
    if not isinstance(series, dict):
        series = {metric: series}
    if not series or not any(series.values()):
        raise ValueError("no records to plot")
    xkey = "iter" if x_axis == "iteration" else "floats_values_only"

    points = {}
    for label, recs in series.items():
        pts = [(getattr(r, xkey), getattr(r, metric)) for r in recs]
        points[label] = [(x, math.log10(y)) for x, y in pts if y is not None and y > 0 and math.isfinite(y)]
    all_pts = [p for pts in points.values() for p in pts]
    xs = [p[0] for p in all_pts] or [0, 1]
    ys = [p[1] for p in all_pts] or [0, 1]
    x0, x1 = min(xs), max(xs)
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + pw * (x - x0) / (x1 - x0)

    def sy(y):
        return top + ph * (1 - (y - y0) / (y1 - y0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{"iteration" if x_axis == "iteration" else "floats transmitted"}</text>',
        f'<text x="14" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 14 {top + ph / 2})">{escape(metric)} (log10)</text>',
    ]
    for e in range(y0, y1 + 1):
        out.append(f'<text x="{left - 6}" y="{sy(e) + 4:.1f}" text-anchor="end">1e{e}</text>')
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{sy(e):.1f}" y2="{sy(e):.1f}" stroke="#ddd"/>')
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{xv:.4g}</text>')
    out.append('<g class="series">')
    for idx, (label, pts) in enumerate(points.items()):
        colour = PALETTE[idx % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline data-label="{escape(label)}" fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
    out.append("</g>")
    out.append('<g class="legend">')
    for idx, label in enumerate(points):
        colour = PALETTE[idx % len(PALETTE)]
        ly = top + 10 + 16 * idx
        out.append(f'<line x1="{left + pw + 10}" x2="{left + pw + 30}" y1="{ly}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 35}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path
