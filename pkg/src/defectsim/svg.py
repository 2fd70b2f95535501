"""Minimal static SVG line charts: axes, legend, defection tick marks.

Just enough to render loss curves from traces without a plotting dependency.
"""

from __future__ import annotations

from typing import Sequence

PALETTE = ("#1f6fb2", "#d1495b", "#3b8653", "#8e6fb2", "#b27f1f", "#4f4f4f")


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def _fmt(value: float) -> str:
    return f"{value:.4g}"


def line_chart(series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
               title: str = "", x_label: str = "round", y_label: str = "",
               markers: Sequence[tuple[float, str]] = (),
               width: int = 720, height: int = 440) -> str:
    """Render x/y series as an SVG document string.

    ``series`` holds (label, xs, ys) triples; ``markers`` are vertical dashed
    lines with a small label, used for defection rounds.
    """
    margin_left, margin_right, margin_top, margin_bottom = 64, 16, 34, 44
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom

    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x: float) -> float:
        return margin_left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return margin_top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="14" font-family="sans-serif">{title}</text>')

    # axes and ticks
    axis = f'stroke="#333" stroke-width="1"'
    parts.append(f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
                 f'y2="{margin_top + plot_h}" {axis}/>')
    parts.append(f'<line x1="{margin_left}" y1="{margin_top + plot_h}" '
                 f'x2="{margin_left + plot_w}" y2="{margin_top + plot_h}" {axis}/>')
    for tick in _ticks(x_lo, x_hi):
        x = sx(tick)
        parts.append(f'<line x1="{x:.1f}" y1="{margin_top + plot_h}" x2="{x:.1f}" '
                     f'y2="{margin_top + plot_h + 4}" {axis}/>')
        parts.append(f'<text x="{x:.1f}" y="{margin_top + plot_h + 16}" '
                     f'text-anchor="middle" font-size="10" '
                     f'font-family="sans-serif">{_fmt(tick)}</text>')
    for tick in _ticks(y_lo, y_hi):
        y = sy(tick)
        parts.append(f'<line x1="{margin_left - 4}" y1="{y:.1f}" '
                     f'x2="{margin_left}" y2="{y:.1f}" {axis}/>')
        parts.append(f'<text x="{margin_left - 7}" y="{y + 3:.1f}" '
                     f'text-anchor="end" font-size="10" '
                     f'font-family="sans-serif">{_fmt(tick)}</text>')
    parts.append(f'<text x="{margin_left + plot_w / 2:.1f}" y="{height - 8}" '
                 f'text-anchor="middle" font-size="11" '
                 f'font-family="sans-serif">{x_label}</text>')
    if y_label:
        y_mid = margin_top + plot_h / 2
        parts.append(f'<text x="14" y="{y_mid:.1f}" text-anchor="middle" '
                     f'font-size="11" font-family="sans-serif" '
                     f'transform="rotate(-90 14 {y_mid:.1f})">{y_label}</text>')

    for x_mark, label in markers:
        x = sx(x_mark)
        parts.append(f'<line x1="{x:.1f}" y1="{margin_top}" x2="{x:.1f}" '
                     f'y2="{margin_top + plot_h}" stroke="#999" '
                     f'stroke-width="1" stroke-dasharray="4 3"/>')
        if label:
            parts.append(f'<text x="{x + 3:.1f}" y="{margin_top + 11}" '
                         f'font-size="9" fill="#666" '
                         f'font-family="sans-serif">{label}</text>')

    for index, (label, xs, ys) in enumerate(series):
        color = PALETTE[index % len(PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        legend_y = margin_top + 8 + 14 * index
        legend_x = margin_left + plot_w - 150
        parts.append(f'<line x1="{legend_x}" y1="{legend_y}" '
                     f'x2="{legend_x + 18}" y2="{legend_y}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{legend_x + 23}" y="{legend_y + 3}" '
                     f'font-size="10" font-family="sans-serif">{label}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
