"""Single-series SVG line charts, written without any plotting dependency."""
from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 60


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_chart(xs: Sequence[float], ys: Sequence[float], title: str = "", xlabel: str = "N",
               ylabel: str = "", log_y: bool = False) -> str:
    """An SVG document plotting ys against xs. Non-finite (or, on a log axis, non-positive) points are dropped."""
    pts = []
    for x, y in zip(xs, ys):
        if y is None:
            continue
        x, y = float(x), float(y)
        if log_y:
            if not y > 0:
                continue
            y = math.log10(y)
        if math.isfinite(x) and math.isfinite(y):
            pts.append((x, y))
    w, h = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{MARGIN + h}" x2="{MARGIN + w}" y2="{MARGIN + h}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{MARGIN + h}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel + (" (log10)" if log_y else ""))}</text>',
    ]
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
        if x1 == x0:
            x0, x1 = x0 - 1, x1 + 1
        if y1 == y0:
            y0, y1 = y0 - 1, y1 + 1

        def sx(x):
            return MARGIN + (x - x0) / (x1 - x0) * w

        def sy(y):
            return MARGIN + h - (y - y0) / (y1 - y0) * h

        path = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{path}"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.5" fill="steelblue"/>')
        for v, (xx, yy, anchor) in (
            (x0, (MARGIN, MARGIN + h + 18, "start")),
            (x1, (MARGIN + w, MARGIN + h + 18, "end")),
        ):
            out.append(f'<text x="{xx}" y="{yy}" text-anchor="{anchor}" font-size="11">{_fmt(v)}</text>')
        for v, yy in ((y0, MARGIN + h), (y1, MARGIN + 4)):
            out.append(f'<text x="{MARGIN - 6}" y="{yy}" text-anchor="end" font-size="11">{_fmt(v)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
