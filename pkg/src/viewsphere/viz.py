"""Unfolded-sphere score maps as deterministic SVG documents.

Cells scatter onto an equirectangular plane (phi rightward, theta downward),
one glyph per cell, colored by a linear two-color ramp.  Optional overlays
mark the gold rings, a numbered search path, and local maxima.  Identical
inputs always produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .goldeval import GoldDistribution
from .polysphere import PolySphere
from .scorer import ScoreMap

__all__ = ["HexMapStyle", "render_hexmap"]


@dataclass(frozen=True)
class HexMapStyle:
    width: int = 900
    height: int = 470
    margin: int = 28
    glyph_radius: float = 6.5
    ramp_low: str = "#1d3557"
    ramp_high: str = "#ffd166"
    background: str = "#ffffff"
    zero_fill: str = "#e9ecef"
    gold_ring_stroke: str = "#d62828"
    trace_stroke: str = "#2a9d8f"
    show_gold_rings: bool = True
    show_trace: bool = True
    show_local_maxima: bool = False

    def __post_init__(self):
        if self.ramp_low == self.ramp_high:
            raise ValueError("color ramp endpoints must be distinct")
        if self.width <= 2 * self.margin or self.height <= 2 * self.margin:
            raise ValueError("canvas too small for the configured margin")


def render_hexmap(sphere: PolySphere, values, style: HexMapStyle | None = None, *,
                  trace=None, gold_cell: int | None = None) -> str:
    """Render a ScoreMap or GoldDistribution over the sphere as an SVG string.

    Gold distributions draw zero-weight cells in the neutral ``zero_fill``
    color; score maps color every cell from the ramp.  ``gold_cell`` (or the
    distribution's own gold cell) enables the ring overlay.
    """
    style = style or HexMapStyle()
    if isinstance(values, GoldDistribution):
        data = values.weights
        neutral_zeros = True
        if gold_cell is None:
            gold_cell = values.gold_cell
    elif isinstance(values, ScoreMap):
        data = values.scores
        neutral_zeros = False
    else:
        data = np.asarray(values, dtype=float)
        neutral_zeros = False
    if data.shape[0] != sphere.n_cells:
        raise ValueError(
            f"map has {data.shape[0]} values but the sphere has {sphere.n_cells} cells"
        )

    lo, hi = float(data.min()), float(data.max())
    span = hi - lo
    low_rgb = _parse_color(style.ramp_low)
    high_rgb = _parse_color(style.ramp_high)

    xy = [_project(sphere.centers[c], style) for c in range(sphere.n_cells)]
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" '
        f'height="{style.height}" viewBox="0 0 {style.width} {style.height}">',
        f'<rect width="{style.width}" height="{style.height}" fill="{style.background}"/>',
        '<g stroke="none">',
    ]
    for cid in range(sphere.n_cells):
        v = float(data[cid])
        if neutral_zeros and v == 0.0:
            fill = style.zero_fill
        else:
            t = 0.5 if span == 0.0 else (v - lo) / span
            fill = _lerp_color(low_rgb, high_rgb, t)
        x, y = xy[cid]
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{style.glyph_radius:.2f}" fill="{fill}"/>')
    parts.append("</g>")

    if style.show_gold_rings and gold_cell is not None:
        parts.append(f'<g fill="none" stroke="{style.gold_ring_stroke}" stroke-width="1.5">')
        for k in range(3):
            for c in sorted(sphere.ring(gold_cell, k)):
                x, y = xy[c]
                parts.append(
                    f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{style.glyph_radius + 1.5:.2f}"/>'
                )
        parts.append("</g>")

    if style.show_local_maxima:
        parts.append('<g fill="none" stroke="#000000" stroke-width="1.0">')
        for c, nbrs in enumerate(sphere.adjacency):
            if all(data[c] > data[n] for n in nbrs):
                x, y = xy[c]
                parts.append(
                    f'<rect x="{x - style.glyph_radius:.2f}" y="{y - style.glyph_radius:.2f}" '
                    f'width="{2 * style.glyph_radius:.2f}" height="{2 * style.glyph_radius:.2f}"/>'
                )
        parts.append("</g>")

    if style.show_trace and trace is not None and trace.entries:
        points = " ".join(
            f"{xy[e.cell][0]:.2f},{xy[e.cell][1]:.2f}" for e in trace.entries
        )
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{style.trace_stroke}" '
            'stroke-width="1.2" stroke-dasharray="3 2"/>'
        )
        parts.append(f'<g font-family="monospace" font-size="8" fill="{style.trace_stroke}">')
        for e in trace.entries:
            x, y = xy[e.cell]
            parts.append(f'<text x="{x + 2:.2f}" y="{y - 2:.2f}">{e.index}</text>')
        parts.append("</g>")

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _project(center: np.ndarray, style: HexMapStyle) -> tuple[float, float]:
    # up=+Y spherical convention, matching the camera module
    theta = math.acos(max(-1.0, min(1.0, float(center[1]))))
    phi = math.atan2(float(center[2]), float(center[0])) % (2.0 * math.pi)
    w = style.width - 2 * style.margin
    h = style.height - 2 * style.margin
    return (style.margin + phi / (2.0 * math.pi) * w, style.margin + theta / math.pi * h)


def _parse_color(color: str) -> tuple[int, int, int]:
    if not (color.startswith("#") and len(color) == 7):
        raise ValueError(f"colors must be #rrggbb, got {color!r}")
    return (int(color[1:3], 16), int(color[3:5], 16), int(color[5:7], 16))


def _lerp_color(low, high, t: float) -> str:
    t = max(0.0, min(1.0, t))
    rgb = tuple(round(l + (h - l) * t) for l, h in zip(low, high))
    return "#%02x%02x%02x" % rgb
