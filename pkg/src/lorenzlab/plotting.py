"""Dependency-free SVG emission for experiment artifacts.

Plots are written as self-contained SVG with fixed formatting so that a
rerun with identical data produces identical bytes. Only the three kinds
the experiments need are supported: scatter, line, loglog.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError

_WIDTH, _HEIGHT = 800, 560
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 74, 24, 42, 54
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#7f7f7f")
_KINDS = ("scatter", "line", "loglog")


@dataclass(frozen=True)
class Series:
    """One named data series for emit_plot."""

    label: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise DomainError("series x and y must be 1-d of equal length")
        if len(x) == 0:
            raise DomainError("empty series")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("series contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _decade_ticks(lo: float, hi: float) -> list[float]:
    ticks = [10.0 ** k for k in range(math.ceil(lo - 1e-9),
                                      math.floor(hi + 1e-9) + 1)]
    return ticks or [10.0 ** lo, 10.0 ** hi]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def emit_plot(data, kind: str, path, title: str = "", xlabel: str = "",
              ylabel: str = "") -> Path:
    """Write a scatter, line, or loglog plot of one or more series.

    data is a Series or a sequence of them. Raises DomainError for an
    unknown kind, empty input, or non-positive values on a loglog plot.
    Returns the written path.
    """
    if kind not in _KINDS:
        raise DomainError(f"unknown plot kind {kind!r}")
    series = [data] if isinstance(data, Series) else list(data)
    if not series:
        raise DomainError("no series to plot")
    loglog = kind == "loglog"

    xs, ys = [], []
    for s in series:
        if loglog and (np.any(s.x <= 0) or np.any(s.y <= 0)):
            raise DomainError("loglog requires strictly positive data")
        xs.append(np.log10(s.x) if loglog else s.x)
        ys.append(np.log10(s.y) if loglog else s.y)

    x_lo = min(float(np.min(v)) for v in xs)
    x_hi = max(float(np.max(v)) for v in xs)
    y_lo = min(float(np.min(v)) for v in ys)
    y_hi = max(float(np.max(v)) for v in ys)
    if x_hi <= x_lo:
        pad = 0.5 if x_lo == 0 else abs(x_lo) * 0.05 + 1e-12
        x_lo, x_hi = x_lo - pad, x_hi + pad
    if y_hi <= y_lo:
        pad = 0.5 if y_lo == 0 else abs(y_lo) * 0.05 + 1e-12
        y_lo, y_hi = y_lo - pad, y_hi + pad
    x_pad = (x_hi - x_lo) * 0.04
    y_pad = (y_hi - y_lo) * 0.06
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    iw = _WIDTH - _MARGIN_L - _MARGIN_R
    ih = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(v: float) -> float:
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * iw

    def py(v: float) -> float:
        return _MARGIN_T + (y_hi - v) / (y_hi - y_lo) * ih

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
           f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
           f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>']

    x_ticks = _decade_ticks(x_lo, x_hi) if loglog else _nice_ticks(x_lo, x_hi)
    y_ticks = _decade_ticks(y_lo, y_hi) if loglog else _nice_ticks(y_lo, y_hi)
    for t in x_ticks:
        v = math.log10(t) if loglog else t
        if not x_lo <= v <= x_hi:
            continue
        out.append(f'<line x1="{px(v):.2f}" y1="{_MARGIN_T}" '
                   f'x2="{px(v):.2f}" y2="{_MARGIN_T + ih}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{px(v):.2f}" y="{_MARGIN_T + ih + 18}" '
                   f'font-family="sans-serif" font-size="12" '
                   f'text-anchor="middle">{_fmt(t)}</text>')
    for t in y_ticks:
        v = math.log10(t) if loglog else t
        if not y_lo <= v <= y_hi:
            continue
        out.append(f'<line x1="{_MARGIN_L}" y1="{py(v):.2f}" '
                   f'x2="{_MARGIN_L + iw}" y2="{py(v):.2f}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{_MARGIN_L - 8}" y="{py(v):.2f}" '
                   f'font-family="sans-serif" font-size="12" '
                   f'text-anchor="end" dominant-baseline="middle">'
                   f'{_fmt(t)}</text>')
    out.append(f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{iw}" '
               f'height="{ih}" fill="none" stroke="#333333"/>')

    for i, (s, sx, sy) in enumerate(zip(series, xs, ys)):
        color = _PALETTE[i % len(_PALETTE)]
        if kind == "scatter":
            for u, v in zip(sx, sy):
                out.append(f'<circle cx="{px(u):.2f}" cy="{py(v):.2f}" '
                           f'r="2.2" fill="{color}" fill-opacity="0.55"/>')
        else:
            pts = " ".join(f"{px(u):.2f},{py(v):.2f}"
                           for u, v in zip(sx, sy))
            out.append(f'<polyline points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.8"/>')
            for u, v in zip(sx, sy):
                out.append(f'<circle cx="{px(u):.2f}" cy="{py(v):.2f}" '
                           f'r="3.0" fill="{color}"/>')

    if len(series) > 1:
        for i, s in enumerate(series):
            color = _PALETTE[i % len(_PALETTE)]
            ly = _MARGIN_T + 14 + 18 * i
            out.append(f'<rect x="{_MARGIN_L + iw - 150}" y="{ly - 9}" '
                       f'width="12" height="12" fill="{color}"/>')
            out.append(f'<text x="{_MARGIN_L + iw - 132}" y="{ly + 1}" '
                       f'font-family="sans-serif" font-size="12">'
                       f'{s.label}</text>')

    if title:
        out.append(f'<text x="{_WIDTH / 2:.0f}" y="24" '
                   f'font-family="sans-serif" font-size="16" '
                   f'text-anchor="middle">{title}</text>')
    if xlabel:
        out.append(f'<text x="{_MARGIN_L + iw / 2:.0f}" '
                   f'y="{_HEIGHT - 14}" font-family="sans-serif" '
                   f'font-size="13" text-anchor="middle">{xlabel}</text>')
    if ylabel:
        out.append(f'<text x="20" y="{_MARGIN_T + ih / 2:.0f}" '
                   f'font-family="sans-serif" font-size="13" '
                   f'text-anchor="middle" '
                   f'transform="rotate(-90 20 {_MARGIN_T + ih / 2:.0f})">'
                   f'{ylabel}</text>')

    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
