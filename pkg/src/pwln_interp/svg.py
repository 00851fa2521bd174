"""Minimal self-contained SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math
from html import escape

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 64, "right": 150, "top": 36, "bottom": 56}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(
    series: dict[str, list[tuple[float, float, float]]],
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    x_tick_labels: list[str] | None = None,
    y_range: tuple[float, float] | None = None,
) -> str:
    """Render ``{name: [(x, y, err), ...]}`` as polylines with error bars.

    ``err`` may be NaN (no bar).  With ``x_tick_labels`` the x values are
    treated as category positions 0..k-1.
    """
    pts = [(x, y, e) for s in series.values() for x, y, e in s if math.isfinite(y)]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    if y_range is None:
        lows = [y - (e if math.isfinite(e) else 0.0) for _, y, e in pts] or [0.0]
        highs = [y + (e if math.isfinite(e) else 0.0) for _, y, e in pts] or [1.0]
        y_range = (min(lows), max(highs))
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = y_range
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{MARGIN["left"] - 4}" x2="{MARGIN["left"]}" y1="{sy(t):.1f}" y2="{sy(t):.1f}" stroke="#444"/>')
        out.append(f'<text x="{MARGIN["left"] - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    if x_tick_labels is not None:
        xticks = [(float(i), lab) for i, lab in enumerate(x_tick_labels)]
    else:
        xticks = [(x, f"{x:g}") for x in sorted(set(xs))]
    for x, lab in xticks:
        out.append(f'<line x1="{sx(x):.1f}" x2="{sx(x):.1f}" y1="{MARGIN["top"] + ph}" y2="{MARGIN["top"] + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{sx(x):.1f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{escape(lab)}</text>')
    out.append(
        f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 14}" text-anchor="middle">{escape(x_label)}</text>'
    )
    out.append(
        f'<text transform="translate(16 {MARGIN["top"] + ph / 2:.1f}) rotate(-90)" text-anchor="middle">'
        f"{escape(y_label)}</text>"
    )
    for i, (name, data) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        good = [(x, y, e) for x, y, e in data if math.isfinite(y)]
        if good:
            path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y, _ in good)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y, e in good:
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="3" fill="{color}"/>')
            if math.isfinite(e) and e > 0:
                out.append(
                    f'<line x1="{sx(x):.1f}" x2="{sx(x):.1f}" y1="{sy(y - e):.1f}" y2="{sy(y + e):.1f}" '
                    f'stroke="{color}"/>'
                )
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" x2="{lx + 18}" y1="{ly - 4}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
