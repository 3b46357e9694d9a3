"""Figure output: a deterministic two-panel SVG comparing ground truth
and chart (points colored by a fixed position-to-color bijection), and a
localization-error CDF figure rendered with matplotlib."""

from __future__ import annotations

import colorsys

import numpy as np

from .embed import ChannelChart
from .errors import DataError

_PANEL = 420  # px
_MARGIN = 40
_RADIUS = 2.5


def position_colors(truth_positions: np.ndarray) -> list:
    """Fixed bijection from normalized ground-truth coordinates to a 2-D
    color gradient: hue follows x, lightness follows y."""
    x = np.asarray(truth_positions, dtype=np.float64)
    span = x.max(axis=0) - x.min(axis=0)
    span = np.where(span > 0, span, 1.0)
    u = (x - x.min(axis=0)) / span
    colors = []
    for hx, ly in u:
        r, g, b = colorsys.hls_to_rgb(0.85 * hx, 0.25 + 0.5 * ly, 0.9)
        colors.append(f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}")
    return colors


def _panel_coords(points: np.ndarray, x0: float) -> np.ndarray:
    span = points.max(axis=0) - points.min(axis=0)
    span = np.where(span > 0, span, 1.0)
    u = (points - points.min(axis=0)) / span
    px = x0 + _MARGIN + u[:, 0] * (_PANEL - 2 * _MARGIN)
    # SVG y axis points down
    py = _MARGIN + (1.0 - u[:, 1]) * (_PANEL - 2 * _MARGIN)
    return np.column_stack([px, py])


def plot_chart(chart, truth_positions: np.ndarray, out_path) -> None:
    """Two-panel SVG: ground-truth map on the left, chart on the right,
    identical per-point colors so structure preservation is visible."""
    z = chart.z if isinstance(chart, ChannelChart) else np.asarray(chart, dtype=np.float64)
    x = np.asarray(truth_positions, dtype=np.float64)
    if z.shape != x.shape:
        raise DataError(f"chart/truth length mismatch: {z.shape} vs {x.shape}")
    colors = position_colors(x)
    width, height = 2 * _PANEL, _PANEL
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{_PANEL // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">ground truth</text>',
        f'<text x="{_PANEL + _PANEL // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">channel chart</text>',
    ]
    for points, x0 in ((x, 0.0), (z, float(_PANEL))):
        for (px, py), c in zip(_panel_coords(points, x0), colors):
            lines.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{_RADIUS}" fill="{c}"/>'
            )
    lines.append("</svg>")
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def plot_error_cdf(cdf_sets: dict, out_path) -> None:
    """Localization-error CDF figure; cdf_sets maps labels to
    (sorted errors, cumulative fractions)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not cdf_sets:
        raise DataError("no error CDFs to plot")
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(cdf_sets):
        e, p = cdf_sets[label]
        ax.step(e, p, where="post", label=label)
    ax.set_xlabel("absolute localization error [m]")
    ax.set_ylabel("CDF")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, metadata={"Date": None} if str(out_path).endswith(".svg") else None)
    plt.close(fig)
