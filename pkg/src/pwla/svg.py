"""Minimal static SVG line plots.

Output depends only on the data, so files can be compared byte for byte.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

WIDTH, HEIGHT = 800, 600
LEFT, RIGHT, TOP, BOTTOM = 80, 30, 50, 60
TICKS = 10
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


class Series(NamedTuple):
    label: str
    xs: Sequence[float]
    ys: Sequence[float]
    dashed: bool = False
    markers: bool = False


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _limits(values: np.ndarray, margin: float) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        pad = max(abs(lo), 1.0) * 0.05
        return lo - pad, hi + pad
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


def line_plot(series: Sequence[Series], title: str = "", xlabel: str = "", ylabel: str = "",
              logy: bool = False) -> str:
    """Render ``series`` as polylines on shared axes and return SVG text.

    Non-finite points are dropped. With ``logy`` the y axis is log10 and
    non-positive values are dropped too.
    """
    clean = []
    for s in series:
        x = np.asarray(s.xs, dtype=float)
        y = np.asarray(s.ys, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logy:
            ok &= y > 0
            y = np.where(ok, np.log10(np.where(ok, y, 1.0)), y)
        clean.append((s, x[ok], y[ok]))
    allx = np.concatenate([c[1] for c in clean] + [np.zeros(0)])
    ally = np.concatenate([c[2] for c in clean] + [np.zeros(0)])
    if len(allx) == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = _limits(allx, 0.0)
    y0, y1 = _limits(ally, 0.03)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for k in range(TICKS + 1):
        tx = x0 + (x1 - x0) * k / TICKS
        ty = y0 + (y1 - y0) * k / TICKS
        X, Y = px(tx), py(ty)
        ylab = f"1e{ty:.2f}" if logy else f"{ty:.3g}"
        out.append(f'<line x1="{X:.2f}" y1="{TOP + ph}" x2="{X:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{TOP + ph + 20}" text-anchor="middle">{tx:.3g}</text>')
        out.append(f'<line x1="{LEFT - 5}" y1="{Y:.2f}" x2="{LEFT}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{Y + 4:.2f}" text-anchor="end">{ylab}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="28" text-anchor="middle" font-size="16">{_escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{HEIGHT - 15}" text-anchor="middle">{_escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="18" y="{TOP + ph / 2:.0f}" text-anchor="middle" '
                   f'transform="rotate(-90 18 {TOP + ph / 2:.0f})">{_escape(ylabel)}</text>')
    for k, (s, x, y) in enumerate(clean):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        if s.markers:
            out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>' for a, b in zip(x, y))
        ly = TOP + 15 + 16 * k
        out.append(f'<line x1="{LEFT + pw - 150}" y1="{ly}" x2="{LEFT + pw - 125}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{LEFT + pw - 120}" y="{ly + 4}">{_escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
