"""Minimal static SVG line charts (polylines, axes, legend)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

W, H = 720, 460
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 40, 60


@dataclass(frozen=True)
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]
    dashed: bool = False
    color: str | None = None


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * span:
        out.append(round(v, 10))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))


def line_chart(
    series: Sequence[Series],
    title: str,
    xlabel: str,
    ylabel: str,
    annotate_max: int | None = None,
    y_range: tuple[float, float] | None = None,
) -> str:
    """Render series as polylines; ``annotate_max`` marks the maximum of that series."""
    xs = [x for s in series for x in s.xs]
    ys = [y for s in series for y in s.ys]
    x0, x1 = min(xs), max(xs)
    if y_range is None:
        y0, y1 = min(0.0, min(ys)), max(ys)
        y1 = y1 + 0.05 * (y1 - y0 or 1.0)
    else:
        y0, y1 = y_range
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0 or 1.0) * pw

    def py(y):
        return TOP + ph - (y - y0) / (y1 - y0 or 1.0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        parts.append(f'<line x1="{px(t):.2f}" y1="{TOP + ph}" x2="{px(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{px(t):.2f}" y="{TOP + ph + 19}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        parts.append(f'<line x1="{LEFT - 5}" y1="{py(t):.2f}" x2="{LEFT}" y2="{py(t):.2f}" stroke="black"/>')
        parts.append(f'<line x1="{LEFT}" y1="{py(t):.2f}" x2="{LEFT + pw}" y2="{py(t):.2f}" stroke="#eee"/>')
        parts.append(f'<text x="{LEFT - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    parts.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 18}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(
        f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>'
    )

    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{pts}"/>')
        ly = TOP + 10 + 20 * i
        lx = LEFT + pw + 15
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 28}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        parts.append(f'<text x="{lx + 34}" y="{ly + 4}">{escape(s.label)}</text>')

    if annotate_max is not None:
        s = series[annotate_max]
        k = max(range(len(s.ys)), key=lambda j: s.ys[j])
        mx, my = float(s.xs[k]), float(s.ys[k])
        parts.append(f'<circle cx="{px(mx):.2f}" cy="{py(my):.2f}" r="4" fill="black" class="max-marker"/>')
        parts.append(
            f'<text x="{px(mx):.2f}" y="{py(my) - 10:.2f}" text-anchor="middle" class="max-label" '
            f'data-x="{mx!r}" data-y="{my!r}">max {my:.3f} at {_fmt(mx)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
