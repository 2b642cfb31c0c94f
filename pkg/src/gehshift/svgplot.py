"""Minimal dependency-free SVG scatter plots.

Every data point is drawn as one ``<circle class="point">`` element so plots
can be checked mechanically.  Fitted lines are ``<path class="fit">`` and
confidence bands ``<path class="band">``.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 72, 20, 40, 56
POINT_COLOR = "#1f77b4"
FIT_COLOR = "#d62728"
BAND_COLOR = "#d62728"


def nice_ticks(lo: float, hi: float, target: int = 6) -> List[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + step * 1e-9:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e5 or a < 1e-3:
        return f"{v:.2g}"
    return f"{v:.6g}"


def _range(values: Sequence[float], extra: Sequence[float] = ()) -> Tuple[float, float]:
    vals = [float(v) for v in list(values) + list(extra) if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class Axes:
    def __init__(self, x_range, y_range):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.pw = WIDTH - MARGIN_L - MARGIN_R
        self.ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(self, x: float) -> float:
        return MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y: float) -> float:
        return MARGIN_T + (1.0 - (y - self.y0) / (self.y1 - self.y0)) * self.ph


def scatter_svg(xs: Sequence[float], ys: Sequence[float], *, title: str, xlabel: str, ylabel: str,
                fit=None, band: bool = True, vline: Optional[float] = None,
                point_labels: Optional[Sequence[str]] = None, x_range=None, y_range=None) -> str:
    """Render a scatter plot, optionally with a fitted line and its 95% band.

    ``fit`` is any object with ``predict(x)`` and ``band(x)`` (a
    :class:`~gehshift.stats_analysis.RegressionResult`).
    """
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    grid = np.linspace(min(xs), max(xs), 50) if xs else np.array([])
    band_lo = band_hi = None
    extra_y: List[float] = []
    if fit is not None and len(grid):
        if band:
            band_lo, band_hi = fit.band(grid)
            extra_y = list(band_lo) + list(band_hi)
        else:
            extra_y = list(fit.predict(grid))
    xr = x_range or _range(xs + ([vline] if vline is not None else []))
    yr = y_range or _range(ys, extra_y)
    ax = Axes(xr, yr)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text class="title" x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    left, right = MARGIN_L, WIDTH - MARGIN_R
    top, bottom = MARGIN_T, HEIGHT - MARGIN_B
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>'
               f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>')
    ticks = ['<g class="ticks">']
    for t in nice_ticks(*xr):
        x = ax.px(t)
        ticks.append(f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 5}" stroke="black"/>'
                     f'<text x="{x:.2f}" y="{bottom + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in nice_ticks(*yr):
        y = ax.py(t)
        ticks.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>'
                     f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">{_label(t)}</text>')
    ticks.append("</g>")
    out.extend(ticks)
    out.append(f'<text class="xlabel" x="{(left + right) / 2:.1f}" y="{HEIGHT - 14}" '
               f'text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text class="ylabel" x="16" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>')

    if band_lo is not None:
        upper = " ".join(f"L{ax.px(x):.2f},{ax.py(y):.2f}" for x, y in zip(grid, band_hi))
        lower = " ".join(f"L{ax.px(x):.2f},{ax.py(y):.2f}" for x, y in zip(grid[::-1], band_lo[::-1]))
        d = "M" + upper[1:] + " " + lower + " Z"
        out.append(f'<path class="band" d="{d}" fill="{BAND_COLOR}" fill-opacity="0.15" stroke="none"/>')
    if fit is not None and len(grid):
        y_a, y_b = fit.predict([grid[0], grid[-1]])
        out.append(f'<path class="fit" d="M{ax.px(grid[0]):.2f},{ax.py(y_a):.2f} '
                   f'L{ax.px(grid[-1]):.2f},{ax.py(y_b):.2f}" stroke="{FIT_COLOR}" stroke-width="2" fill="none"/>')
    if vline is not None:
        x = ax.px(vline)
        out.append(f'<path class="vline" d="M{x:.2f},{top} L{x:.2f},{bottom}" stroke="gray" '
                   f'stroke-dasharray="4 3" fill="none"/>')

    pts = ['<g class="points">']
    for i, (x, y) in enumerate(zip(xs, ys)):
        tip = f"<title>{escape(point_labels[i])}</title>" if point_labels else ""
        pts.append(f'<circle class="point" cx="{ax.px(x):.2f}" cy="{ax.py(y):.2f}" r="3.5" '
                   f'fill="{POINT_COLOR}" fill-opacity="0.75">{tip}</circle>')
    pts.append("</g>")
    out.extend(pts)
    out.append("</svg>")
    return "\n".join(out) + "\n"
