"""Minimal log-log line charts as standalone SVG text (no plotting library)."""

from __future__ import annotations

import math
from html import escape
from typing import Sequence

WIDTH, HEIGHT = 640, 420
MARGIN = (70, 30, 30, 60)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float):
    """Powers of ten (or of two if the range is under a decade) inside [lo, hi] in log space."""
    base = 10.0 if hi - lo >= math.log(10.0) else 2.0
    lb = math.log(base)
    return [k * lb for k in range(math.ceil(lo / lb - 1e-9), math.floor(hi / lb + 1e-9) + 1)], base


def loglog_svg(series: Sequence[tuple], title: str, xlabel: str, ylabel: str,
               fits: Sequence[tuple] = ()) -> str:
    """``series``: (label, xs, ys); ``fits``: (label, slope, intercept) in natural-log units."""
    pts = [(math.log(x), math.log(y)) for _, xs, ys in series for x, y in zip(xs, ys)
           if x > 0 and y > 0 and math.isfinite(y)]
    if not pts:
        pts = [(0.0, 0.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    xt, _ = _ticks(x0, x1)
    for t in xt:
        out.append(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{math.exp(t):.4g}</text>')
    yt, _ = _ticks(y0, y1)
    for t in yt:
        out.append(f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{math.exp(t):.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')

    legend_y = top + 14
    for i, (label, xs, ys) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        coords = [(sx(math.log(x)), sy(math.log(y))) for x, y in zip(xs, ys)
                  if x > 0 and y > 0 and math.isfinite(y)]
        if len(coords) > 1:
            path = " ".join(f"{a:.2f},{b:.2f}" for a, b in coords)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in coords:
            out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{left + pw - 8}" y="{legend_y}" text-anchor="end" fill="{color}">{escape(label)}</text>')
        legend_y += 15
    for j, (label, slope, intercept) in enumerate(fits):
        color = COLORS[(len(series) + j) % len(COLORS)]
        ya, yb = intercept + slope * x0, intercept + slope * x1
        out.append(f'<line x1="{sx(x0):.2f}" y1="{sy(ya):.2f}" x2="{sx(x1):.2f}" y2="{sy(yb):.2f}" '
                   f'stroke="{color}" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{left + pw - 8}" y="{legend_y}" text-anchor="end" fill="{color}">{escape(label)}</text>')
        legend_y += 15
    out.append("</svg>")
    return "\n".join(out) + "\n"
