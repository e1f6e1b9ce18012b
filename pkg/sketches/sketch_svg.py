"""
SVG rendering of sketches

Output is byte-deterministic for a given (record, options): fixed viewBox,
fixed number formatting and a palette indexed by primitive position and seed.
Geometry is drawn in sketch coordinates inside a y-flipped group, so arc
sweep flags follow the mathematical orientation directly.

@version: v0.1.0
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

from .sketch_model import (
    ImpossibleArcError,
    Primitive,
    PrimitiveKind,
    SketchRecord,
    arc_geometry,
)

logger = logging.getLogger(__name__)

SVG_FORMAT_VERSION = 1
VIEW_HALF_WIDTH = 0.6
POINT_MARKER_RADIUS = 0.008

PALETTE = (
    '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728',
    '#9467bd', '#8c564b', '#e377c2', '#7f7f7f',
    '#bcbd22', '#17becf',
)


@dataclass(frozen=True)
class RenderOptions:
    """
    Rendering options

    Args:
        seed: palette offset, so separate primitives get distinct colors
        stroke_width: stroke width in sketch units
        size_px: width and height of the SVG element in pixels
        dash: dash and gap lengths for construction primitives
    """
    seed: int = 0
    stroke_width: float = 0.006
    size_px: int = 512
    dash: tuple = (0.02, 0.01)

    def __post_init__(self):
        if self.stroke_width <= 0:
            raise ValueError(f"stroke_width={self.stroke_width} must be > 0")
        if self.size_px < 1:
            raise ValueError(f"size_px={self.size_px} must be >= 1")
        if len(self.dash) != 2 or min(self.dash) <= 0:
            raise ValueError(f"dash={self.dash} must be two positive lengths")


def _fmt(value: float) -> str:
    text = f"{value:.6f}"
    return '0.000000' if text == '-0.000000' else text


def _stroke(color: str, p: Primitive, options: RenderOptions) -> str:
    attrs = f'stroke="{color}" stroke-width="{_fmt(options.stroke_width)}"'
    if p.construction:
        attrs += f' stroke-dasharray="{_fmt(options.dash[0])} {_fmt(options.dash[1])}"'
    return attrs


def _element(p: Primitive, color: str, options: RenderOptions) -> Optional[str]:
    q = p.params
    if p.kind == PrimitiveKind.LINE:
        return (f'<line x1="{_fmt(q[0])}" y1="{_fmt(q[1])}" x2="{_fmt(q[2])}" y2="{_fmt(q[3])}" '
                f'{_stroke(color, p, options)}/>')
    if p.kind == PrimitiveKind.CIRCLE:
        if q[2] <= 0:
            logger.warning("skipping circle with non-positive radius %g", q[2])
            return None
        return (f'<circle cx="{_fmt(q[0])}" cy="{_fmt(q[1])}" r="{_fmt(q[2])}" '
                f'{_stroke(color, p, options)}/>')
    if p.kind == PrimitiveKind.ARC:
        geom = arc_geometry(*q)
        sweep = 1 if geom.ccw else 0
        r = _fmt(geom.radius)
        d = f"M {_fmt(q[0])} {_fmt(q[1])} A {r} {r} 0 0 {sweep} {_fmt(q[2])} {_fmt(q[3])}"
        return f'<path d="{d}" {_stroke(color, p, options)}/>'
    if p.kind == PrimitiveKind.POINT:
        return (f'<circle cx="{_fmt(q[0])}" cy="{_fmt(q[1])}" r="{_fmt(POINT_MARKER_RADIUS)}" '
                f'fill="{color}" stroke="none"/>')
    return None


def render_svg(rec: SketchRecord, options: Optional[RenderOptions] = None) -> str:
    """
    Render a normalized record as SVG text

    One element per drawable primitive; construction primitives are dashed.
    Arcs that admit no circle are logged and skipped.

    Args:
        rec: normalized sketch record
        options: rendering options (defaults when None)

    Returns:
        str: SVG document
    """
    options = options or RenderOptions()
    view = f"{_fmt(-VIEW_HALF_WIDTH)} {_fmt(-VIEW_HALF_WIDTH)} {_fmt(2 * VIEW_HALF_WIDTH)} {_fmt(2 * VIEW_HALF_WIDTH)}"
    lines: List[str] = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<!-- sketch-svg format {SVG_FORMAT_VERSION} -->',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{options.size_px}" '
        f'height="{options.size_px}" viewBox="{view}">',
        '<g transform="scale(1,-1)" fill="none" stroke-linecap="round">',
    ]
    for i, p in enumerate(rec.primitives):
        color = PALETTE[(options.seed + i) % len(PALETTE)]
        try:
            element = _element(p, color, options)
        except ImpossibleArcError as e:
            logger.warning("record %s primitive %d skipped: %s", rec.id, i, e)
            continue
        if element is not None:
            lines.append(element)
    lines.extend(['</g>', '</svg>'])
    return '\n'.join(lines) + '\n'
