"""Minimal SVG 1.1 line charts.

Plots are drawn from the numbers already written to CSV so emitting an SVG can
never change a numeric output.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Chart:
    """A single-panel chart.

    Parameters
    ----------
    logx : bool
        Logarithmic x axis (sweeps); non-positive x values are dropped.
    """

    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    width: int = 640
    height: int = 400
    series: List[Tuple[str, Sequence[float], Sequence[float]]] = field(default_factory=list)
    vlines: List[Tuple[str, float]] = field(default_factory=list)
    hlines: List[Tuple[str, float]] = field(default_factory=list)

    def add(self, label: str, x, y) -> "Chart":
        pts = [(float(a), float(b)) for a, b in zip(x, y)
               if math.isfinite(float(a)) and math.isfinite(float(b)) and (not self.logx or float(a) > 0)]
        self.series.append((label, [p[0] for p in pts], [p[1] for p in pts]))
        return self

    def _bounds(self):
        xs = [v for _, x, _ in self.series for v in x] + [v for _, v in self.vlines if not self.logx or v > 0]
        ys = [v for _, _, y in self.series for v in y] + [v for _, v in self.hlines]
        if not xs:
            xs = [1.0, 10.0] if self.logx else [0.0, 1.0]
        if not ys:
            ys = [0.0, 1.0]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if self.logx:
            x0, x1 = math.log10(x0), math.log10(x1)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        W, H = self.width, self.height
        L, R, T, B = 64, 150, 32, 48
        x0, x1, y0, y1 = self._bounds()

        def X(v):
            v = math.log10(v) if self.logx else v
            return L + (v - x0) / (x1 - x0) * (W - L - R)

        def Y(v):
            return H - B - (v - y0) / (y1 - y0) * (H - T - B)

        out = ['<?xml version="1.0" encoding="UTF-8"?>',
               f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
               f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
               f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - B}" fill="none" stroke="black"/>']
        if self.title:
            out.append(f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(self.title)}</text>')
        for v, lab in _ticks(x0, x1, self.logx):
            px = X(10 ** v if self.logx else v)
            out.append(f'<line x1="{px:.2f}" y1="{H - B}" x2="{px:.2f}" y2="{H - B + 4}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{H - B + 16}" text-anchor="middle">{lab}</text>')
        for v, lab in _ticks(y0, y1, False):
            py = Y(v)
            out.append(f'<line x1="{L - 4}" y1="{py:.2f}" x2="{L}" y2="{py:.2f}" stroke="black"/>')
            out.append(f'<text x="{L - 6}" y="{py + 4:.2f}" text-anchor="end">{lab}</text>')
        out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="14" y="{(T + H - B) / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {(T + H - B) / 2:.1f})">{escape(self.ylabel)}</text>')
        for lab, v in self.vlines:
            if self.logx and v <= 0:
                continue
            px = X(v)
            if L <= px <= W - R:
                out.append(f'<line x1="{px:.2f}" y1="{T}" x2="{px:.2f}" y2="{H - B}" stroke="gray" stroke-dasharray="4 3"/>')
                out.append(f'<text x="{px + 3:.2f}" y="{T + 12}" fill="gray">{escape(lab)}</text>')
        for lab, v in self.hlines:
            py = Y(v)
            out.append(f'<line x1="{L}" y1="{py:.2f}" x2="{W - R}" y2="{py:.2f}" stroke="gray" stroke-dasharray="2 3"/>')
            out.append(f'<text x="{W - R + 4}" y="{py + 4:.2f}" fill="gray">{escape(lab)}</text>')
        for i, (lab, xs, ys) in enumerate(self.series):
            c = _COLORS[i % len(_COLORS)]
            if xs:
                pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(xs, ys))
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
            ly = T + 14 + 16 * i
            out.append(f'<line x1="{W - R + 8}" y1="{ly + 40}" x2="{W - R + 28}" y2="{ly + 40}" stroke="{c}" stroke-width="2"/>')
            out.append(f'<text x="{W - R + 32}" y="{ly + 44}">{escape(lab)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _ticks(a: float, b: float, log: bool, n: int = 5):
    if log:
        lo, hi = math.floor(a), math.ceil(b)
        return [(k, _fmt(10.0 ** k)) for k in range(lo, hi + 1) if a - 1e-9 <= k <= b + 1e-9]
    span = b - a
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=mag)
    k0 = math.ceil(a / step)
    out = []
    v = k0 * step
    while v <= b + 1e-12:
        out.append((v, _fmt(0.0 if abs(v) < 1e-12 * step else v)))
        v += step
    return out


def read_csv_columns(path) -> dict:
    """Columns of a CSV written by this package, as float lists."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    return {h: [float(r[i]) for r in body] for i, h in enumerate(head)}


def trajectory_svg(csv_path, svg_path, title: str = "") -> None:
    """⟨S_z⟩ and pseudospin components against time."""
    d = read_csv_columns(csv_path)
    ch = Chart(title, "t (s)", "expectation")
    for k in ("Sz", "Ix_ps", "Iy_ps", "Iz_ps"):
        if k in d:
            ch.add(k, d["t_s"], d[k])
    ch.save(svg_path)


def sweep_svg(csv_path, svg_path, p0: float, threshold_hz: Optional[float] = None, title: str = "",
              refs: Sequence[Tuple[str, float]] = ()) -> None:
    """p/p(0) against error strength (log x), with the 90% line and reference frequencies."""
    d = read_csv_columns(csv_path)
    ch = Chart(title, "error (Hz)", "p / p(0)", logx=True)
    ch.add("p/p(0)", d["error_Hz"], [v / p0 for v in d["p_final"]])
    ch.hlines.append(("90%", 0.9))
    ch.vlines.extend(refs)
    if threshold_hz is not None:
        ch.vlines.append(("threshold", threshold_hz))
    ch.save(svg_path)


def aht_svg(csv_path, svg_path, title: str = "") -> None:
    """Every non-time column of an AHT panel CSV."""
    d = read_csv_columns(csv_path)
    ch = Chart(title, "t (s)", "")
    for k, v in d.items():
        if k != "t_s":
            ch.add(k, d["t_s"], v)
    ch.save(svg_path)
