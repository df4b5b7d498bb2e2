"""Minimal deterministic SVG charts: line plots with error bars and scatter plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 340
MARGIN = dict(left=64, right=120, top=36, bottom=48)
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def _fmt(v) -> str:
    return f"{v:.2f}"


def _tick_label(v) -> str:
    return f"{v:.3g}"


def _span(values):
    v = np.asarray([x for x in values if np.isfinite(x)], float)
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.1, 0.5)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


class _Frame:
    def __init__(self, xr, yr):
        self.xr, self.yr = xr, yr
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def px(self, x):
        return self.x0 + (x - self.xr[0]) / (self.xr[1] - self.xr[0]) * (self.x1 - self.x0)

    def py(self, y):
        return self.y0 + (y - self.yr[0]) / (self.yr[1] - self.yr[0]) * (self.y1 - self.y0)

    def axes(self, title, xlabel, ylabel):
        out = [
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" '
            f'height="{self.y0 - self.y1}" fill="none" stroke="#444"/>',
            f'<text x="{(self.x0 + self.x1) / 2:.1f}" y="20" text-anchor="middle" '
            f'font-size="14">{escape(title)}</text>',
            f'<text x="{(self.x0 + self.x1) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
            f'font-size="12">{escape(xlabel)}</text>',
            f'<text x="16" y="{(self.y0 + self.y1) / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {(self.y0 + self.y1) / 2:.1f})">{escape(ylabel)}</text>',
        ]
        for v in np.linspace(*self.xr, 5):
            x = self.px(v)
            out.append(f'<line x1="{_fmt(x)}" y1="{self.y0}" x2="{_fmt(x)}" y2="{self.y0 + 4}" '
                       f'stroke="#444"/>')
            out.append(f'<text x="{_fmt(x)}" y="{self.y0 + 16}" text-anchor="middle" '
                       f'font-size="10">{_tick_label(v)}</text>')
        for v in np.linspace(*self.yr, 5):
            y = self.py(v)
            out.append(f'<line x1="{self.x0 - 4}" y1="{_fmt(y)}" x2="{self.x0}" y2="{_fmt(y)}" '
                       f'stroke="#444"/>')
            out.append(f'<text x="{self.x0 - 6}" y="{_fmt(y + 3)}" text-anchor="end" '
                       f'font-size="10">{_tick_label(v)}</text>')
        return out


def _document(body) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _legend(names, frame):
    out = []
    for k, name in enumerate(names):
        y = frame.y1 + 14 + 16 * k
        c = PALETTE[k % len(PALETTE)]
        out.append(f'<line x1="{frame.x1 + 10}" y1="{y}" x2="{frame.x1 + 28}" y2="{y}" '
                   f'stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{frame.x1 + 32}" y="{y + 4}" font-size="11">{escape(name)}</text>')
    return out


def line_plot(series: dict, title="", xlabel="", ylabel="") -> str:
    """``series`` maps a name to ``(x, y)`` or ``(x, y, yerr)``.

    Error bars are drawn only where ``yerr`` is positive.
    """
    xs = [v for s in series.values() for v in s[0]]
    ys = []
    for s in series.values():
        y = np.asarray(s[1], float)
        e = np.asarray(s[2], float) if len(s) > 2 else np.zeros_like(y)
        ys += list(y - e) + list(y + e)
    frame = _Frame(_span(xs), _span(ys))
    body = frame.axes(title, xlabel, ylabel)
    for k, (name, s) in enumerate(series.items()):
        c = PALETTE[k % len(PALETTE)]
        x = np.asarray(s[0], float)
        y = np.asarray(s[1], float)
        pts = " ".join(f"{_fmt(frame.px(a))},{_fmt(frame.py(b))}" for a, b in zip(x, y))
        if x.size > 1:
            body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="2"/>')
        for a, b in zip(x, y):
            body.append(f'<circle cx="{_fmt(frame.px(a))}" cy="{_fmt(frame.py(b))}" r="3" '
                        f'fill="{c}"/>')
        if len(s) > 2:
            for a, b, e in zip(x, y, np.asarray(s[2], float)):
                if e > 0:
                    body.append(f'<line x1="{_fmt(frame.px(a))}" y1="{_fmt(frame.py(b - e))}" '
                                f'x2="{_fmt(frame.px(a))}" y2="{_fmt(frame.py(b + e))}" '
                                f'stroke="{c}" class="errorbar"/>')
    body += _legend(list(series), frame)
    return _document(body)


def scatter_plot(groups: dict, title="", xlabel="", ylabel="", radius=1.5) -> str:
    """``groups`` maps a name to an (M, 2) array of points."""
    allpts = [np.asarray(p, float).reshape(-1, 2) for p in groups.values()]
    stacked = np.vstack(allpts) if allpts else np.zeros((0, 2))
    frame = _Frame(_span(stacked[:, 0]), _span(stacked[:, 1]))
    body = frame.axes(title, xlabel, ylabel)
    for k, pts in enumerate(allpts):
        c = PALETTE[k % len(PALETTE)]
        for a, b in pts:
            body.append(f'<circle cx="{_fmt(frame.px(a))}" cy="{_fmt(frame.py(b))}" '
                        f'r="{radius}" fill="{c}"/>')
    if len(groups) > 1:
        body += _legend(list(groups), frame)
    return _document(body)
