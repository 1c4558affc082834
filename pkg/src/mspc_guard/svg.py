"""Minimal, dependency-free SVG charts.

Output depends only on the inputs (fixed number formatting, no timestamps),
so charts can be compared byte for byte.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 60
MAX_POINTS = 2000


def _f(x):
    return f"{x:.2f}"


class Canvas:
    def __init__(self, width=WIDTH, height=HEIGHT):
        self.width = width
        self.height = height
        self.items = []

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"{extra}/>'
        )

    def polyline(self, xs, ys, stroke="#1f77b4", width=1.0):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
        self.items.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}"/>'
        )

    def rect(self, x, y, w, h, fill="#1f77b4"):
        self.items.append(
            f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(w)}" height="{_f(h)}" fill="{fill}"/>'
        )

    def text(self, x, y, s, size=12, anchor="middle", rotate=None):
        tr = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.items.append(
            f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}"{tr}>{escape(str(s))}</text>'
        )

    def render(self):
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">'
        )
        body = "\n".join(self.items)
        return f'{head}\n<rect width="100%" height="100%" fill="#fff"/>\n{body}\n</svg>\n'

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())


def _decimate(x, y, max_points=MAX_POINTS):
    """Keep min and max of each bucket so spikes survive."""
    n = len(x)
    if n <= max_points:
        return np.asarray(x), np.asarray(y)
    buckets = max_points // 2
    edges = np.linspace(0, n, buckets + 1).astype(int)
    keep = []
    for a, b in zip(edges[:-1], edges[1:]):
        seg = y[a:b]
        i, j = a + int(np.argmin(seg)), a + int(np.argmax(seg))
        keep.extend(sorted({i, j}))
    keep = np.asarray(keep)
    return np.asarray(x)[keep], np.asarray(y)[keep]


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def control_chart(times_s, values, limit_95, limit_99, title, ylabel, onset_s=None):
    """Time series of one statistic with dashed 95% and 99% limit lines."""
    c = Canvas()
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    t = np.asarray(times_s, dtype=float) / 3600.0
    v = np.asarray(values, dtype=float)
    tmin, tmax = (float(t[0]), float(t[-1])) if len(t) else (0.0, 1.0)
    if tmax <= tmin:
        tmax = tmin + 1.0
    # log scale keeps the in-control band readable next to large excursions
    floor = max(min(limit_95, limit_99) * 1e-3, 1e-12)
    lv = np.log10(np.maximum(v, floor)) if len(v) else np.zeros(0)
    l95, l99 = np.log10(max(limit_95, floor)), np.log10(max(limit_99, floor))
    vmin = min(float(lv.min()) if len(lv) else l95, l95)
    vmax = max(float(lv.max()) if len(lv) else l99, l99) + 0.1

    def sx(tt):
        return x0 + (tt - tmin) / (tmax - tmin) * (x1 - x0)

    def sy(vv):
        return y0 - (vv - vmin) / (vmax - vmin) * (y0 - y1)

    c.line(x0, y0, x1, y0)
    c.line(x0, y0, x0, y1)
    for tt in _nice_ticks(tmin, tmax):
        c.line(sx(tt), y0, sx(tt), y0 + 4)
        c.text(sx(tt), y0 + 18, f"{tt:.1f}", size=10)
    for vv in _nice_ticks(vmin, vmax):
        c.line(x0 - 4, sy(vv), x0, sy(vv))
        c.text(x0 - 6, sy(vv) + 4, f"{10 ** vv:.3g}", size=10, anchor="end")
    xs, ys = _decimate(t, lv)
    c.polyline([sx(a) for a in xs], [sy(b) for b in ys])
    c.line(x0, sy(l95), x1, sy(l95), stroke="#d62728", dash="6,4")
    c.line(x0, sy(l99), x1, sy(l99), stroke="#d62728", dash="2,2")
    if onset_s is not None:
        ot = onset_s / 3600.0
        if tmin <= ot <= tmax:
            c.line(sx(ot), y0, sx(ot), y1, stroke="#888", dash="3,3")
    c.text(WIDTH / 2, 22, title, size=14)
    c.text(WIDTH / 2, HEIGHT - 18, "time (h)")
    c.text(18, HEIGHT / 2, ylabel, rotate=-90)
    return c


def bar_chart(names, values, title, ylabel="contribution"):
    """Signed bars, one per variable, in the given order."""
    c = Canvas()
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    vals = np.asarray(values, dtype=float)
    top = float(np.max(np.abs(vals))) if len(vals) else 1.0
    top = top if top > 0 else 1.0

    def sy(v):
        return (y0 + y1) / 2 - v / top * (y0 - y1) / 2

    n = max(len(vals), 1)
    slot = (x1 - x0) / n
    c.line(x0, y0, x0, y1)
    c.line(x0, sy(0.0), x1, sy(0.0))
    for v in (-top, -top / 2, 0.0, top / 2, top):
        c.line(x0 - 4, sy(v), x0, sy(v))
        c.text(x0 - 6, sy(v) + 4, f"{v:.3g}", size=10, anchor="end")
    for i, (name, v) in enumerate(zip(names, vals)):
        bx = x0 + i * slot + slot * 0.15
        ya, yb = sorted((sy(0.0), sy(v)))
        c.rect(bx, ya, slot * 0.7, max(yb - ya, 0.5), fill="#1f77b4" if v >= 0 else "#ff7f0e")
        c.text(x0 + (i + 0.5) * slot, y0 + 18, name, size=11)
    c.text(WIDTH / 2, 22, title, size=14)
    c.text(18, HEIGHT / 2, ylabel, rotate=-90)
    return c
