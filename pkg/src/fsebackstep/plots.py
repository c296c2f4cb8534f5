"""Minimal deterministic SVG line plots (no plotting dependency)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

WIDTH, HEIGHT = 720, 360
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 40
MAX_POINTS = 2000
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.4g}"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _thin(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # keep per-bucket min and max so spikes survive decimation
    if len(t) <= MAX_POINTS:
        return t, y
    buckets = np.array_split(np.arange(len(t)), MAX_POINTS // 2)
    idx = []
    for b in buckets:
        seg = y[b]
        lo, hi = b[int(np.argmin(seg))], b[int(np.argmax(seg))]
        idx.extend(sorted({lo, hi}))
    idx = np.array(idx)
    return t[idx], y[idx]


def line_plot_svg(t: np.ndarray, series: Sequence[tuple[str, np.ndarray]], title: str,
                  xlabel: str = "t [s]") -> str:
    """One SVG document with a polyline per series on shared autoscaled axes.

    The y-range is annotated with its min and max; a flat series gets a
    unit-height band so it still renders.
    """
    t = np.asarray(t, dtype=float)
    if len(t) == 0 or not series:
        raise ValueError("line_plot_svg needs samples and at least one series")
    ys = [np.asarray(y, dtype=float) for _, y in series]
    x_lo, x_hi = float(t[0]), float(t[-1])
    y_lo = float(min(np.min(y) for y in ys))
    y_hi = float(max(np.max(y) for y in ys))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad_lo, pad_hi = (y_lo - 0.5, y_hi + 0.5) if y_hi == y_lo else (y_lo, y_hi)

    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return MARGIN_T + (pad_hi - v) / (pad_hi - pad_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">{_escape(title)}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    if pad_lo < 0 < pad_hi:
        z = sy(0.0)
        out.append(f'<line x1="{MARGIN_L}" y1="{_fmt(z)}" x2="{MARGIN_L + pw}" y2="{_fmt(z)}" '
                   f'stroke="#bbb" stroke-dasharray="4 3"/>')
    for k, ((name, _), y) in enumerate(zip(series, ys)):
        tt, yy = _thin(t, y)
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(tt, yy))
        color = COLORS[k % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{MARGIN_L + pw - 8}" y="{MARGIN_T + 16 + 16 * k}" text-anchor="end" '
                   f'fill="{color}">{_escape(name)}</text>')
    out += [
        f'<text x="{MARGIN_L - 6}" y="{MARGIN_T + 4}" text-anchor="end">max {_label(y_hi)}</text>',
        f'<text x="{MARGIN_L - 6}" y="{MARGIN_T + ph}" text-anchor="end">min {_label(y_lo)}</text>',
        f'<text x="{MARGIN_L}" y="{HEIGHT - 22}" text-anchor="middle">{_label(x_lo)}</text>',
        f'<text x="{MARGIN_L + pw}" y="{HEIGHT - 22}" text-anchor="middle">{_label(x_hi)}</text>',
        f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">{_escape(xlabel)}</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def trace_plots(trace) -> dict[str, str]:
    """The three standard figures of a run, keyed by file name."""
    est = sorted(trace.w)
    approx = [(f"e_F{i + 1}", trace.e_F[i]) for i in est] or [("e_F (no estimator)", np.zeros(len(trace)))]
    switch = [(f"w{i + 1}", trace.w[i]) for i in est] or [("w (no estimator)", np.ones(len(trace)))]
    return {
        "tracking.svg": line_plot_svg(trace.t, [("xi1", trace.xi[:, 0])], "Tracking error"),
        "approx.svg": line_plot_svg(trace.t, approx, "Approximation error"),
        "switch.svg": line_plot_svg(trace.t, switch, "Switching signal"),
    }
