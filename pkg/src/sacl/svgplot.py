"""Dependency-free SVG line and bar plots for study artifacts.

Hand-emitted markup with fixed coordinate formatting, so plot files are
byte-deterministic and diffable like the CSVs they accompany.
"""

from __future__ import annotations

import math

from .exceptions import ConfigurationError

_WIDTH, _HEIGHT = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 40, 50
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1000 or abs(v) < 0.01:
        return f"{v:.2e}"
    return f"{v:.3g}"


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
            f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
            f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
            f'<text x="{_WIDTH / 2:.0f}" y="22" text-anchor="middle" '
            f'font-family="monospace" font-size="14">{title}</text>',
            f'<text x="{_WIDTH / 2:.0f}" y="{_HEIGHT - 10}" text-anchor="middle" '
            f'font-family="monospace" font-size="12">{xlabel}</text>',
            f'<text x="16" y="{_HEIGHT / 2:.0f}" text-anchor="middle" '
            f'font-family="monospace" font-size="12" '
            f'transform="rotate(-90 16 {_HEIGHT / 2:.0f})">{ylabel}</text>',
        ]

    def axes(self, x_lo, x_hi, y_lo, y_hi):
        x0, x1 = _LEFT, _WIDTH - _RIGHT
        y0, y1 = _HEIGHT - _BOTTOM, _TOP
        self.parts.append(
            f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
        )
        self.parts.append(
            f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
        )
        for v in _ticks(x_lo, x_hi):
            px = self.px(v, x_lo, x_hi)
            self.parts.append(
                f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{_fmt(px)}" y="{y0 + 18}" text-anchor="middle" '
                f'font-family="monospace" font-size="10">{_tick_label(v)}</text>'
            )
        for v in _ticks(y_lo, y_hi):
            py = self.py(v, y_lo, y_hi)
            self.parts.append(
                f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{x0 - 8}" y="{_fmt(py + 3)}" text-anchor="end" '
                f'font-family="monospace" font-size="10">{_tick_label(v)}</text>'
            )

    @staticmethod
    def px(v, lo, hi):
        span = hi - lo if hi > lo else 1.0
        return _LEFT + (v - lo) / span * (_WIDTH - _LEFT - _RIGHT)

    @staticmethod
    def py(v, lo, hi):
        span = hi - lo if hi > lo else 1.0
        return (_HEIGHT - _BOTTOM) - (v - lo) / span * (_HEIGHT - _TOP - _BOTTOM)

    def write(self, path):
        self.parts.append("</svg>")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.parts) + "\n")


def line_plot(series: dict[str, list[tuple[float, float]]], title: str,
              xlabel: str, ylabel: str, path) -> None:
    """Multi-series line plot; one polyline and legend entry per series."""
    if not series or any(len(pts) == 0 for pts in series.values()):
        raise ConfigurationError("every series needs at least one point")
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    if not all(math.isfinite(v) for v in xs + ys):
        raise ConfigurationError("plot values must be finite")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    pad = 0.05 * (y_hi - y_lo or 1.0)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    canvas = _Canvas(title, xlabel, ylabel)
    canvas.axes(x_lo, x_hi, y_lo, y_hi)
    for k, (name, pts) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(
            f"{_fmt(canvas.px(x, x_lo, x_hi))},{_fmt(canvas.py(y, y_lo, y_hi))}"
            for x, y in pts
        )
        canvas.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _TOP + 14 * k
        canvas.parts.append(
            f'<line x1="{_WIDTH - 150}" y1="{ly}" x2="{_WIDTH - 130}" y2="{ly}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        canvas.parts.append(
            f'<text x="{_WIDTH - 125}" y="{ly + 4}" font-family="monospace" '
            f'font-size="11">{name}</text>'
        )
    canvas.write(path)


def bar_plot(labels: list[str], values: list[float], title: str,
             ylabel: str, path) -> None:
    """Single-series bar chart with value labels above each bar."""
    if not labels or len(labels) != len(values):
        raise ConfigurationError("need one value per label")
    if not all(math.isfinite(v) for v in values):
        raise ConfigurationError("plot values must be finite")
    y_lo = min(0.0, min(values))
    y_hi = max(values) or 1.0
    y_hi += 0.08 * (y_hi - y_lo or 1.0)
    canvas = _Canvas(title, "", ylabel)
    canvas.axes(0, len(labels), y_lo, y_hi)
    slot = (_WIDTH - _LEFT - _RIGHT) / len(labels)
    for k, (label, v) in enumerate(zip(labels, values)):
        x = _LEFT + slot * (k + 0.15)
        w = slot * 0.7
        y = canvas.py(max(v, 0.0), y_lo, y_hi)
        h = abs(canvas.py(0.0, y_lo, y_hi) - canvas.py(v, y_lo, y_hi))
        canvas.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{_PALETTE[0]}"/>'
        )
        canvas.parts.append(
            f'<text x="{_fmt(x + w / 2)}" y="{_fmt(y - 4)}" text-anchor="middle" '
            f'font-family="monospace" font-size="10">{v:.4g}</text>'
        )
        canvas.parts.append(
            f'<text x="{_fmt(x + w / 2)}" y="{_HEIGHT - _BOTTOM + 18}" '
            f'text-anchor="middle" font-family="monospace" font-size="10">{label}</text>'
        )
    canvas.write(path)
