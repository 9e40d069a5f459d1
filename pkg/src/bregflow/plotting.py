"""Minimal dependency-free SVG line plots (polylines, axes, labels)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def line_plot(
    x,
    series: dict,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    width: int = 640,
    height: int = 400,
) -> str:
    """Render named series sharing the abscissa ``x`` as an SVG document."""
    x = np.asarray(x, dtype=float)
    margin_l, margin_r, margin_t, margin_b = 70, 130, 40, 50
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b
    ys = [np.asarray(v, dtype=float) for v in series.values()]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.zeros(1)
    xlo, xhi = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
    ylo, yhi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5

    def px(v):
        return margin_l + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return margin_t + (yhi - v) / (yhi - ylo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin_l}" y1="{margin_t + ph}" x2="{margin_l + pw}" y2="{margin_t + ph}" stroke="black"/>',
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{margin_t + ph}" stroke="black"/>',
    ]
    for t in _ticks(xlo, xhi):
        out.append(
            f'<text x="{px(t):.1f}" y="{margin_t + ph + 16}" text-anchor="middle">{t:.3g}</text>'
        )
    for t in _ticks(ylo, yhi):
        out.append(f'<text x="{margin_l - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    for i, (name, y) in enumerate(zip(series, ys)):
        colour = _COLOURS[i % len(_COLOURS)]
        ok = np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = margin_t + 14 + 18 * i
        out.append(
            f'<line x1="{margin_l + pw + 10}" y1="{ly - 4}" x2="{margin_l + pw + 30}" y2="{ly - 4}" '
            f'stroke="{colour}" stroke-width="2"/>'
        )
        out.append(f'<text x="{margin_l + pw + 35}" y="{ly}">{escape(str(name))}</text>')
    out.append(
        f'<text x="{margin_l + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{margin_t + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {margin_t + ph / 2})">{escape(ylabel)}</text>'
    )
    if title:
        out.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
