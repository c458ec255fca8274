"""Artifact writers: CSV tables, JSON summaries, self-contained SVG line charts.

All writers are deterministic: identical inputs give identical bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import IoError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass
class Table:
    columns: Sequence[str]
    rows: Sequence[Sequence] = ()

    def render(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row has {len(row)} cells, header has {len(self.columns)}")
            lines.append(",".join(fmt(v) for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    dashed: bool = False


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    logy: bool = False
    width: int = 720
    height: int = 440

    def render(self) -> str:
        return render_svg(self)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def render_json(data) -> str:
    return json.dumps(_jsonable(data), indent=2) + "\n"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def render_svg(chart: Chart) -> str:
    left, right, top, bottom = 72, 170, 40, 56
    W, H = chart.width, chart.height
    pw, ph = W - left - right, H - top - bottom

    def ty(v):
        return math.log10(v) if chart.logy else v

    xs, ys = [], []
    for s in chart.series:
        for x, y in zip(s.x, s.y):
            if math.isfinite(x) and math.isfinite(y) and (not chart.logy or y > 0):
                xs.append(float(x))
                ys.append(ty(float(y)))
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{left + pw / 2:.2f}" y="22" text-anchor="middle" font-size="15">{escape(chart.title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        label = f"1e{t:.3g}" if chart.logy else f"{t:.4g}"
        out.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{Y:.2f}" x2="{left + pw}" y2="{Y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{H - 14}" text-anchor="middle">{escape(chart.xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.2f})">{escape(chart.ylabel)}</text>')
    for i, s in enumerate(chart.series):
        color = PALETTE[i % len(PALETTE)]
        pts = [
            f"{px(float(x)):.2f},{py(ty(float(y))):.2f}"
            for x, y in zip(s.x, s.y)
            if math.isfinite(x) and math.isfinite(y) and (not chart.logy or y > 0)
        ]
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6"{dash} points="{" ".join(pts)}"/>')
        ly = top + 14 + 18 * i
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def gnuplot_script(chart: Chart, csv_name: str, columns: Sequence[str]) -> str:
    """Plot script for users who prefer gnuplot; series columns are looked up by label in the CSV header."""
    lines = [
        "set datafile separator ','",
        "set key outside right",
        f"set title '{chart.title}'",
        f"set xlabel '{chart.xlabel}'",
        f"set ylabel '{chart.ylabel}'",
    ]
    if chart.logy:
        lines.append("set logscale y")
    plots = []
    for s in chart.series:
        if s.label in columns:
            plots.append(f"'{csv_name}' using 1:{list(columns).index(s.label) + 1} with lines title '{s.label}'")
    lines.append("plot " + ", \\\n     ".join(plots) if plots else "# no plottable series")
    return "\n".join(lines) + "\n"


def write_outputs(artifacts: dict, out_dir) -> list[Path]:
    """Write ``{filename: Table | Chart | dict | str}``; returns the paths in write order."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(out_dir, exc.strerror or str(exc)) from exc
    written = []
    for name in sorted(artifacts):
        obj = artifacts[name]
        if isinstance(obj, (Table, Chart)):
            text = obj.render()
        elif isinstance(obj, str):
            text = obj
        else:
            text = render_json(obj)
        path = out_dir / name
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(path, exc.strerror or str(exc)) from exc
        written.append(path)
    return written
