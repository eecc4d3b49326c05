"""Minimal standalone SVG line plots (no plotting dependency)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Series", "line_plot"]

_PALETTE = ("#1f6fb2", "#d1495b", "#3d8f5f", "#8e5ba6", "#c98a2b", "#4f5d75")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    lo: np.ndarray | None = None   # optional band (e.g. mean - stderr)
    hi: np.ndarray | None = None


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-12 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_plot(series: list[Series], title: str, xlabel: str, ylabel: str,
              width: int = 760, height: int = 480) -> str:
    """Render series (with optional shaded bands) to an SVG string."""
    ml, mr, mt, mb = 64, 16, 36, 48
    pw, ph = width - ml - mr, height - mt - mb

    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = []
    for s in series:
        ys.append(np.asarray(s.y, dtype=float))
        if s.lo is not None:
            ys.append(np.asarray(s.lo, dtype=float))
        if s.hi is not None:
            ys.append(np.asarray(s.hi, dtype=float))
    ys = np.concatenate(ys)
    x_lo, x_hi = float(np.nanmin(xs)), float(np.nanmax(xs))
    y_lo, y_hi = float(np.nanmin(ys)), float(np.nanmax(ys))
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return mt + (y_hi - y) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
    ]
    for tx in _ticks(x_lo, x_hi):
        X = px(tx)
        parts.append(f'<line x1="{X:.1f}" y1="{mt}" x2="{X:.1f}" y2="{mt + ph}" '
                     'stroke="#dddddd"/>')
        parts.append(f'<text x="{X:.1f}" y="{mt + ph + 16}" text-anchor="middle">'
                     f'{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        Y = py(ty)
        parts.append(f'<line x1="{ml}" y1="{Y:.1f}" x2="{ml + pw}" y2="{Y:.1f}" '
                     'stroke="#dddddd"/>')
        parts.append(f'<text x="{ml - 6}" y="{Y + 4:.1f}" text-anchor="end">'
                     f'{_fmt(ty)}</text>')
    parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
                 'stroke="#333333"/>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" '
                 f'text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')

    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        x = np.asarray(s.x, dtype=float)
        if s.lo is not None and s.hi is not None:
            upper = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, s.hi))
            lower = " ".join(f"{px(a):.1f},{py(b):.1f}"
                             for a, b in zip(x[::-1], np.asarray(s.lo)[::-1]))
            parts.append(f'<polygon points="{upper} {lower}" fill="{color}" '
                         'fill-opacity="0.15" stroke="none"/>')
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, s.y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.6"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<line x1="{ml + pw - 130}" y1="{ly - 4}" x2="{ml + pw - 106}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw - 100}" y="{ly}">{s.label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
