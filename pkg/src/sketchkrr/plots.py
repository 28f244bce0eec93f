"""Minimal self-contained SVG output: line charts and heatmaps, no renderer deps."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot_svg", "heatmap_svg"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _axis_ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


def line_plot_svg(x, series: dict, title: str = "", xlabel: str = "",
                  ylabel: str = "", description: str = "") -> str:
    """Render named y-series over shared x values as an SVG line chart."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    all_y = np.concatenate([v for v in ys.values()]) if ys else np.array([0.0, 1.0])
    xlo, xhi = float(x.min()), float(x.max())
    ylo, yhi = float(np.nanmin(all_y)), float(np.nanmax(all_y))
    if math.isclose(xlo, xhi):
        xhi = xlo + 1.0
    if math.isclose(ylo, yhi):
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def px(v):
        return _ML + (v - xlo) / (xhi - xlo) * (_W - _ML - _MR)

    def py(v):
        return _H - _MB - (v - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f"<desc>{description}</desc>",
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for tv in _axis_ticks(xlo, xhi):
        parts.append(f'<line x1="{px(tv):.1f}" y1="{_H - _MB}" x2="{px(tv):.1f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{px(tv):.1f}" y="{_H - _MB + 18}" '
                     f'text-anchor="middle">{_fmt(tv)}</text>')
    for tv in _axis_ticks(ylo, yhi):
        parts.append(f'<line x1="{_ML - 5}" y1="{py(tv):.1f}" x2="{_ML}" '
                     f'y2="{py(tv):.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py(tv):.1f}" text-anchor="end" '
                     f'dominant-baseline="middle">{_fmt(tv)}</text>')
    parts.append(f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
                 f'stroke="black"/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>')
    parts.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_H / 2})">{ylabel}</text>')
    for idx, (name, yv) in enumerate(ys.items()):
        color = _COLORS[idx % len(_COLORS)]
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, yv)
                       if np.isfinite(b))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        ly = _MT + 14 * (idx + 1)
        parts.append(f'<line x1="{_W - _MR - 120}" y1="{ly}" x2="{_W - _MR - 100}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - _MR - 95}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def heatmap_svg(matrix, xticks, yticks, title: str = "", xlabel: str = "",
                ylabel: str = "", description: str = "") -> str:
    """Render a matrix as a blue-to-red heatmap; rows follow yticks order."""
    m = np.asarray(matrix, dtype=float)
    rows, cols = m.shape
    finite = m[np.isfinite(m)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    if math.isclose(lo, hi):
        hi = lo + 1.0
    cw = (_W - _ML - _MR) / cols
    ch = (_H - _MT - _MB) / rows
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f"<desc>{description}</desc>",
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i in range(rows):
        for j in range(cols):
            v = m[i, j]
            if not np.isfinite(v):
                fill = "#dddddd"
            else:
                t = (v - lo) / (hi - lo)
                r = int(255 * t)
                b = int(255 * (1.0 - t))
                fill = f"rgb({r},60,{b})"
            parts.append(f'<rect x="{_ML + j * cw:.1f}" y="{_MT + i * ch:.1f}" '
                         f'width="{cw:.1f}" height="{ch:.1f}" fill="{fill}"/>')
    for j, tv in enumerate(xticks):
        parts.append(f'<text x="{_ML + (j + 0.5) * cw:.1f}" y="{_H - _MB + 16}" '
                     f'text-anchor="middle">{_fmt(float(tv))}</text>')
    for i, tv in enumerate(yticks):
        parts.append(f'<text x="{_ML - 6}" y="{_MT + (i + 0.5) * ch:.1f}" '
                     f'text-anchor="end" dominant-baseline="middle">{_fmt(float(tv))}</text>')
    parts.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{_H / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_H / 2})">{ylabel}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
