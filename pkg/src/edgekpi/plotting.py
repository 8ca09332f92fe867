"""Presentational plots: latency CDFs, per-scenario boxplots and throughput
demand bars, rendered as standalone SVG or as an ASCII fallback."""

from __future__ import annotations

from typing import Sequence

from .kpis import BoxplotStats, Ecdf

_W, _H = 640, 400
_MARGIN = 60


def _x_scale(lo: float, hi: float):
    span = (hi - lo) or 1.0
    return lambda v: _MARGIN + (v - lo) / span * (_W - 2 * _MARGIN)


def _y_scale(lo: float, hi: float):
    span = (hi - lo) or 1.0
    return lambda v: _H - _MARGIN - (v - lo) / span * (_H - 2 * _MARGIN)


def _svg_header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
    ]


def _axes(x_label: str, y_label: str) -> list[str]:
    return [
        f'<line x1="{_MARGIN}" y1="{_H - _MARGIN}" x2="{_W - _MARGIN}" y2="{_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_H - _MARGIN}" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 16}" text-anchor="middle" font-size="12">{x_label}</text>',
        f'<text x="16" y="{_H // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_H // 2})">{y_label}</text>',
    ]


def render_cdf_svg(dist: Ecdf, reliability: float = 0.95, title: str = "Latency CDF") -> str:
    """Step CDF with a horizontal marker at the reliability level."""
    lo, hi = dist.values[0], dist.values[-1]
    sx = _x_scale(lo, hi)
    sy = _y_scale(0.0, 1.0)
    pts = [(sx(lo), sy(0.0))]
    probs = dist.probs
    for v, p_prev, p in zip(dist.values, (0.0,) + probs[:-1], probs):
        pts.append((sx(v), sy(p_prev)))
        pts.append((sx(v), sy(p)))
    pts.append((sx(hi), sy(1.0)))
    poly = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
    parts = _svg_header(title) + _axes("latency (ms)", "P(X <= x)")
    parts.append(f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>')
    y_rel = sy(reliability)
    parts.append(f'<line x1="{_MARGIN}" y1="{y_rel:.2f}" x2="{_W - _MARGIN}" y2="{y_rel:.2f}" '
                 f'stroke="crimson" stroke-dasharray="6,4"/>')
    parts.append(f'<text x="{_W - _MARGIN}" y="{y_rel - 6:.2f}" text-anchor="end" '
                 f'font-size="11" fill="crimson">reliability {reliability:.0%}</text>')
    for frac, value in ((0.0, lo), (0.5, (lo + hi) / 2), (1.0, hi)):
        x = _MARGIN + frac * (_W - 2 * _MARGIN)
        parts.append(f'<text x="{x:.1f}" y="{_H - _MARGIN + 16}" text-anchor="middle" '
                     f'font-size="10">{value:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_box_svg(groups: Sequence[tuple[str, BoxplotStats]], title: str = "Latency boxplot") -> str:
    """One Tukey box per labelled group."""
    if not groups:
        raise ValueError("no groups to plot")
    lo = min(min(s.minimum, s.whisker_lo) for _, s in groups)
    hi = max(max(s.maximum, s.whisker_hi) for _, s in groups)
    sy = _y_scale(lo, hi)
    slot = (_W - 2 * _MARGIN) / len(groups)
    box_w = min(60.0, slot * 0.5)
    parts = _svg_header(title) + _axes("", "latency (ms)")
    for i, (label, s) in enumerate(groups):
        cx = _MARGIN + slot * (i + 0.5)
        x0, x1 = cx - box_w / 2, cx + box_w / 2
        parts.append(f'<line x1="{cx:.1f}" y1="{sy(s.whisker_lo):.1f}" x2="{cx:.1f}" '
                     f'y2="{sy(s.whisker_hi):.1f}" stroke="black"/>')
        for w in (s.whisker_lo, s.whisker_hi):
            parts.append(f'<line x1="{cx - box_w / 4:.1f}" y1="{sy(w):.1f}" '
                         f'x2="{cx + box_w / 4:.1f}" y2="{sy(w):.1f}" stroke="black"/>')
        top, bottom = sy(s.q3), sy(s.q1)
        parts.append(f'<rect x="{x0:.1f}" y="{top:.1f}" width="{box_w:.1f}" '
                     f'height="{max(bottom - top, 0.5):.1f}" fill="lightsteelblue" stroke="black"/>')
        parts.append(f'<line x1="{x0:.1f}" y1="{sy(s.median):.1f}" x2="{x1:.1f}" '
                     f'y2="{sy(s.median):.1f}" stroke="black" stroke-width="2"/>')
        for v in s.outliers:
            parts.append(f'<circle cx="{cx:.1f}" cy="{sy(v):.1f}" r="2.5" fill="none" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{_H - _MARGIN + 16}" text-anchor="middle" '
                     f'font-size="10">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def render_throughput_svg(bars: Sequence[tuple[str, float]],
                          thresholds: Sequence[float] = (32.2, 54.6),
                          title: str = "Demanded throughput") -> str:
    """Demand bars against horizontal cap threshold lines."""
    if not bars:
        raise ValueError("no bars to plot")
    hi = max([v for _, v in bars] + list(thresholds)) * 1.15
    sy = _y_scale(0.0, hi)
    slot = (_W - 2 * _MARGIN) / len(bars)
    bar_w = min(80.0, slot * 0.6)
    parts = _svg_header(title) + _axes("", "Mbit/s")
    for i, (label, v) in enumerate(bars):
        cx = _MARGIN + slot * (i + 0.5)
        top = sy(v)
        parts.append(f'<rect x="{cx - bar_w / 2:.1f}" y="{top:.1f}" width="{bar_w:.1f}" '
                     f'height="{(_H - _MARGIN) - top:.1f}" fill="darkseagreen" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{top - 4:.1f}" text-anchor="middle" '
                     f'font-size="10">{v:.1f}</text>')
        parts.append(f'<text x="{cx:.1f}" y="{_H - _MARGIN + 16}" text-anchor="middle" '
                     f'font-size="10">{label}</text>')
    for cap in thresholds:
        y = sy(cap)
        parts.append(f'<line x1="{_MARGIN}" y1="{y:.2f}" x2="{_W - _MARGIN}" y2="{y:.2f}" '
                     f'stroke="crimson" stroke-dasharray="6,4"/>')
        parts.append(f'<text x="{_W - _MARGIN}" y="{y - 4:.2f}" text-anchor="end" '
                     f'font-size="11" fill="crimson">{cap} Mbit/s</text>')
    parts.append("</svg>")
    return "\n".join(parts)


# -- ASCII fallbacks ---------------------------------------------------------

_ASCII_W = 60
_ASCII_H = 16


def render_cdf_ascii(dist: Ecdf, reliability: float = 0.95) -> str:
    lo, hi = dist.values[0], dist.values[-1]
    span = (hi - lo) or 1.0
    grid = [[" "] * _ASCII_W for _ in range(_ASCII_H)]
    rel_row = _ASCII_H - 1 - int(round(reliability * (_ASCII_H - 1)))
    for col in range(_ASCII_W):
        grid[rel_row][col] = "-"
    probs = dist.probs
    for col in range(_ASCII_W):
        x = lo + span * col / (_ASCII_W - 1)
        p = 0.0
        for v, q in zip(dist.values, probs):
            if v <= x:
                p = q
            else:
                break
        row = _ASCII_H - 1 - int(round(p * (_ASCII_H - 1)))
        grid[row][col] = "*"
    lines = ["".join(row) for row in grid]
    lines.append(f"{lo:.2f} ms".ljust(_ASCII_W - 12) + f"{hi:.2f} ms")
    lines.append(f"reliability marker at {reliability:.0%}")
    return "\n".join(lines)


def render_box_ascii(groups: Sequence[tuple[str, BoxplotStats]]) -> str:
    lo = min(min(s.minimum, s.whisker_lo) for _, s in groups)
    hi = max(max(s.maximum, s.whisker_hi) for _, s in groups)
    span = (hi - lo) or 1.0
    width = _ASCII_W

    def col(v: float) -> int:
        return int(round((v - lo) / span * (width - 1)))

    lines = []
    for label, s in groups:
        row = [" "] * width
        for c in range(col(s.whisker_lo), col(s.whisker_hi) + 1):
            row[c] = "-"
        for c in range(col(s.q1), col(s.q3) + 1):
            row[c] = "="
        row[col(s.median)] = "|"
        for v in s.outliers:
            row[col(v)] = "o"
        lines.append(f"{label:>14} {''.join(row)}")
    lines.append(f"{'':>14} {lo:.2f} ms ... {hi:.2f} ms")
    return "\n".join(lines)


def render_throughput_ascii(bars: Sequence[tuple[str, float]],
                            thresholds: Sequence[float] = (32.2, 54.6)) -> str:
    hi = max([v for _, v in bars] + list(thresholds)) * 1.1
    width = _ASCII_W
    lines = []
    for label, v in bars:
        n = int(round(v / hi * width))
        lines.append(f"{label:>14} {'#' * n} {v:.1f}")
    for cap in thresholds:
        n = int(round(cap / hi * width))
        lines.append(f"{'cap':>14} {' ' * n}^ {cap} Mbit/s")
    return "\n".join(lines)
