"""CSV / JSON / SVG output for experiment results."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")
    return path


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_rate_report(report, out_dir, config: dict | None = None, stem: str = "rates") -> dict:
    out_dir = Path(out_dir)
    rows = [(r.delta, r.alpha, r.worst_error, r.mean_error) for r in report.rows]
    header = ["delta", "alpha", "worst_error", "mean_error"]
    if report.rows and report.rows[0].deviation is not None:
        header.append("deviation")
        rows = [row + (r.deviation,) for row, r in zip(rows, report.rows)]
    paths = {
        "csv": write_csv(out_dir / f"{stem}.csv", header, rows),
        "json": write_json(out_dir / f"{stem}.json", {**report.summary(), "config": config}),
        "svg": write_loglog_svg(
            out_dir / f"{stem}.svg",
            [r.delta for r in report.rows],
            {"worst": [r.worst_error for r in report.rows], "mean": [r.mean_error for r in report.rows]},
            fit=(report.fitted_slope, report.intercept),
            title=f"slope {report.fitted_slope:.3f} (expected {report.expected_slope:.3f})",
        ),
    }
    return {k: str(v) for k, v in paths.items()}


def write_loglog_svg(path, xs, series: dict, fit=None, title="", width=480, height=360) -> Path:
    """Minimal log-log scatter plot with an optional fitted line ``exp(b) * x**a``."""
    xs = np.asarray(xs, dtype=float)
    ys_all = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    lx = np.log10(xs)
    ly_all = np.log10(ys_all[ys_all > 0]) if np.any(ys_all > 0) else np.array([0.0])
    x0, x1 = math.floor(lx.min()), math.ceil(lx.max())
    y0, y1 = math.floor(ly_all.min()), math.ceil(ly_all.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    m = 50

    def px(v):
        return m + (v - x0) / (x1 - x0) * (width - 2 * m)

    def py(v):
        return height - m - (v - y0) / (y1 - y0) * (height - 2 * m)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="{m / 2}" text-anchor="middle">{title}</text>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">delta</text>',
    ]
    for e in range(x0, x1 + 1):
        parts.append(f'<text x="{px(e):.1f}" y="{height - m + 15}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        parts.append(f'<text x="{m - 5}" y="{py(e) + 4:.1f}" text-anchor="end">1e{e}</text>')
    colors = ["#c0392b", "#2471a3", "#229954", "#7d3c98"]
    for k, (name, ys) in enumerate(series.items()):
        c = colors[k % len(colors)]
        for xv, yv in zip(lx, np.asarray(ys, dtype=float)):
            if yv > 0:
                parts.append(f'<circle cx="{px(xv):.1f}" cy="{py(math.log10(yv)):.1f}" r="3" fill="{c}"/>')
        parts.append(f'<text x="{width - m - 5}" y="{m + 15 + 14 * k}" text-anchor="end" fill="{c}">{name}</text>')
    if fit is not None:
        a, b = fit
        ends = [(v, (a * v * math.log(10) + b) / math.log(10)) for v in (lx.min(), lx.max())]
        (ax, ay), (bx, by) = ends
        parts.append(f'<line x1="{px(ax):.1f}" y1="{py(ay):.1f}" x2="{px(bx):.1f}" y2="{py(by):.1f}" '
                     'stroke="gray" stroke-dasharray="4 3"/>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path
