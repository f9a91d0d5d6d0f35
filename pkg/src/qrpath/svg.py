"""Minimal deterministic SVG line charts (axes, polylines, legend, markers)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
W, H = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 55


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    color: Optional[str] = None
    width: float = 1.5
    opacity: float = 1.0
    legend: bool = True


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    logx: bool = False
    series: List[Series] = field(default_factory=list)
    vlines: List[tuple] = field(default_factory=list)  # (x, label, color)

    def add(self, s: Series) -> "Chart":
        if s.color is None:
            s.color = PALETTE[len(self.series) % len(PALETTE)]
        self.series.append(s)
        return self

    def render(self) -> str:
        return render(self)


def _f(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo, hi, k=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / k))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= k:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def render(chart: Chart) -> str:
    tx = (lambda v: math.log10(v)) if chart.logx else (lambda v: v)
    pts = [(tx(x), y) for s in chart.series for x, y in zip(s.x, s.y)
           if math.isfinite(y) and (x > 0 or not chart.logx)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(chart.title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in _ticks(x0, x1):
        X = sx(t)
        lab = f"1e{t:g}" if chart.logx else f"{t:g}"
        out.append(f'<line x1="{_f(X)}" y1="{TOP + ph}" x2="{_f(X)}" y2="{TOP + ph + 4}" stroke="#333"/>')
        out.append(f'<text x="{_f(X)}" y="{TOP + ph + 16}" text-anchor="middle">{lab}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        out.append(f'<line x1="{LEFT - 4}" y1="{_f(Y)}" x2="{LEFT}" y2="{_f(Y)}" stroke="#333"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(Y + 4)}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{H - 12}" text-anchor="middle">{escape(chart.xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.0f})">{escape(chart.ylabel)}</text>')
    for x, label, color in chart.vlines:
        if chart.logx and x <= 0:
            continue
        X = sx(tx(x))
        out.append(f'<line x1="{_f(X)}" y1="{TOP}" x2="{_f(X)}" y2="{TOP + ph}" stroke="{color}" '
                   f'stroke-dasharray="4 3"><title>{escape(label)}</title></line>')
    for s in chart.series:
        seg, segs = [], []
        for x, y in zip(s.x, s.y):
            if math.isfinite(y) and (x > 0 or not chart.logx):
                seg.append(f"{_f(sx(tx(x)))},{_f(sy(y))}")
            elif seg:
                segs.append(seg)
                seg = []
        if seg:
            segs.append(seg)
        for sg in segs:
            out.append(f'<polyline fill="none" stroke="{s.color}" stroke-width="{s.width}" '
                       f'stroke-opacity="{s.opacity}" points="{" ".join(sg)}"/>')
    ly = TOP + 8
    for s in [s for s in chart.series if s.legend] + [
            Series(label, [], [], color) for _, label, color in chart.vlines]:
        out.append(f'<line x1="{W - RIGHT + 12}" y1="{ly}" x2="{W - RIGHT + 32}" y2="{ly}" '
                   f'stroke="{s.color}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 37}" y="{ly + 4}">{escape(s.label)}</text>')
        ly += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"
