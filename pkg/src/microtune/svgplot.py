"""Minimal self-contained SVG line plots for the report artifacts."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

W, H = 720, 360
ML, MR, MT, MB = 60, 20, 30, 45
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _nice_ticks(lo, hi, n=6):
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [round(start + k * step, 10) for k in range(int((hi - start) / step + 1e-9) + 1)]


class Figure:
    def __init__(self, xlim, ylim, title="", xlabel="", ylabel="", width=W, height=H):
        self.x0, self.x1 = map(float, xlim)
        self.y0, self.y1 = map(float, ylim)
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.w, self.h = width, height
        self.items = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def px(self, x):
        return ML + (x - self.x0) / (self.x1 - self.x0) * (self.w - ML - MR)

    def py(self, y):
        return self.h - MB - (y - self.y0) / (self.y1 - self.y0) * (self.h - MT - MB)

    def polyline(self, x, y, color=COLORS[0], width=1.2, cls="line"):
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        # break the line at gaps
        for seg in np.split(np.arange(x.size), np.flatnonzero(~ok)):
            seg = seg[ok[seg]]
            if seg.size < 2:
                continue
            pts = " ".join(f"{self.px(a):.2f},{self.py(b):.2f}" for a, b in zip(x[seg], y[seg]))
            self.items.append(f'<polyline class="{cls}" points="{pts}" fill="none" '
                              f'stroke="{color}" stroke-width="{width}"/>')

    def steps(self, x0, x1, y, color=COLORS[1], cls="step"):
        for a, b, v in zip(x0, x1, y):
            self.items.append(f'<line class="{cls}" x1="{self.px(a):.2f}" y1="{self.py(v):.2f}" '
                              f'x2="{self.px(b):.2f}" y2="{self.py(v):.2f}" stroke="{color}" stroke-width="2"/>')

    def points(self, x, y, color=COLORS[0], r=3.0, cls="point"):
        for a, b in zip(x, y):
            if np.isfinite(a) and np.isfinite(b):
                self.items.append(f'<circle class="{cls}" cx="{self.px(a):.2f}" cy="{self.py(b):.2f}" '
                                  f'r="{r}" fill="{color}"/>')

    def vline(self, x, color="#999999", cls="vline", dash=True):
        d = ' stroke-dasharray="4,3"' if dash else ""
        self.items.append(f'<line class="{cls}" x1="{self.px(x):.2f}" y1="{self.py(self.y0):.2f}" '
                          f'x2="{self.px(x):.2f}" y2="{self.py(self.y1):.2f}" stroke="{color}"{d}/>')

    def text(self, x, y, s, cls="label", anchor="middle", size=11):
        self.items.append(f'<text class="{cls}" x="{self.px(x):.2f}" y="{self.py(y):.2f}" '
                          f'font-size="{size}" text-anchor="{anchor}">{escape(str(s))}</text>')

    def _axes(self):
        out = [f'<rect x="{ML}" y="{MT}" width="{self.w - ML - MR}" height="{self.h - MT - MB}" '
               f'fill="none" stroke="#333"/>']
        for t in _nice_ticks(self.x0, self.x1):
            x = self.px(t)
            out.append(f'<line x1="{x:.2f}" y1="{self.h - MB}" x2="{x:.2f}" y2="{self.h - MB + 4}" stroke="#333"/>')
            out.append(f'<text x="{x:.2f}" y="{self.h - MB + 16}" font-size="10" text-anchor="middle">{t:g}</text>')
        for t in _nice_ticks(self.y0, self.y1, 5):
            y = self.py(t)
            out.append(f'<line x1="{ML - 4}" y1="{y:.2f}" x2="{ML}" y2="{y:.2f}" stroke="#333"/>')
            out.append(f'<text x="{ML - 6}" y="{y + 3:.2f}" font-size="10" text-anchor="end">{t:g}</text>')
        out.append(f'<text x="{self.w / 2:.0f}" y="18" font-size="13" text-anchor="middle">{escape(self.title)}</text>')
        out.append(f'<text x="{self.w / 2:.0f}" y="{self.h - 8}" font-size="11" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="14" y="{self.h / 2:.0f}" font-size="11" text-anchor="middle" '
                   f'transform="rotate(-90 14 {self.h / 2:.0f})">{escape(self.ylabel)}</text>')
        return out

    def render(self):
        body = "\n".join(self._axes() + self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n'
                f"{body}\n</svg>\n")


def histogram_svg(h, peaks, title="Pitch histogram"):
    x, y = h.centers, h.counts
    fig = Figure((x[0], x[-1]), (0, y.max() * 1.15 if y.size else 1), title, "cents", "count")
    fig.polyline(x, y)
    for p in peaks:
        fig.vline(p.range.lo, cls="range")
        fig.vline(p.range.hi, cls="range")
        top = y[h.slice_for(p.range)].max()
        fig.points([p.center], [top], COLORS[1], cls="apex-marker")
        fig.text(p.center, top + 0.04 * y.max(), f"{p.center:.0f} ({p.type.value})", cls="apex")
    return fig.render()


def alignment_svg(series, path, expected, title="Aligned pitch and score"):
    t, c = series.times, series.cents
    ev = path.frame_events()
    finite = c[np.isfinite(c)]
    lo = min(finite.min(), np.min(expected)) - 50
    hi = max(finite.max(), np.max(expected)) + 50
    fig = Figure((t[0], t[-1] + series.frame_hop), (lo, hi), title, "time (s)", "cents")
    fig.polyline(t, c, COLORS[0], 1.0, cls="f0")
    # one horizontal step per event span
    starts, ends, levels = [], [], []
    for j in range(len(expected)):
        idx = np.flatnonzero(ev == j)
        if idx.size:
            starts.append(t[idx[0]])
            ends.append(t[idx[-1]] + series.frame_hop)
            levels.append(expected[j])
    fig.steps(starts, ends, levels)
    return fig.render()


def note_histograms_svg(nhs, names=None, title="Note histograms"):
    hs = [nhs[n] for n in nhs]
    lo = min(h.centers[0] for h in hs)
    hi = max(h.centers[-1] for h in hs)
    top = max(h.counts.max() for h in hs)
    fig = Figure((lo, hi), (0, top * 1.15), title, "cents", "count")
    for k, n in enumerate(nhs):
        h = nhs[n]
        fig.polyline(h.centers, h.counts, COLORS[k % len(COLORS)], cls="note")
        label = names.get(n, str(n)) if names else str(n)
        fig.text(h.centers[int(np.argmax(h.counts))], h.counts.max() + 0.03 * top, label, cls="note-label")
    return fig.render()


def matrix_svg(m, title="Observed peaks per piece"):
    v = m.values
    finite = v[np.isfinite(v)]
    fig = Figure((finite.min() - 50, finite.max() + 50), (-1, m.shape[0]), title, "cents", "piece")
    for i in range(m.shape[0]):
        row = v[i][np.isfinite(v[i])]
        fig.points(row, np.full(row.size, i), COLORS[i % len(COLORS)])
    return fig.render()


def cost_trace_svg(trace, title="Cost during optimisation"):
    fig = Figure((trace.steps[0], max(trace.steps[-1], 1)),
                 (min(trace.costs) * 0.95, max(trace.costs) * 1.05 + 1e-9), title, "step", "cost (cents)")
    fig.polyline(trace.steps, trace.costs)
    return fig.render()


def tuning_svg(t, title="Derived tuning"):
    means = t.means
    fig = Figure((means.min() - 50, means.max() + 50), (0, 1.2), title, "cents", "")
    for d in t:
        fig.vline(d.mean, COLORS[1] if d.fluid else COLORS[0], cls="degree", dash=False)
        label = d.label or f"{d.mean:.0f}"
        fig.text(d.mean, 1.05, f"{label} {d.mean:.0f}±{d.stdev:.0f}", cls="degree-label", size=9)
    return fig.render()
