"""
CAD sketch support: data model, matrix encoding, SVG rendering and
JSON-lines persistence

@version: v0.1.0
"""

from .sketch_io import SketchFormatError, read_records, write_records
from .sketch_model import (
    ArcGeometry,
    CapacityError,
    DegenerateSketchError,
    ImpossibleArcError,
    Primitive,
    PrimitiveKind,
    Provenance,
    SketchLayout,
    SketchRecord,
    arc_geometry,
    canonical_key,
    decode_row,
    decode_sketch,
    dedup_records,
    encode_sketch,
    filter_by_size,
    gen_synthetic,
    kind_histogram,
    normalize_sketch,
)
from .sketch_svg import RenderOptions, render_svg

__all__ = [
    'ArcGeometry',
    'CapacityError',
    'DegenerateSketchError',
    'ImpossibleArcError',
    'Primitive',
    'PrimitiveKind',
    'Provenance',
    'RenderOptions',
    'SketchFormatError',
    'SketchLayout',
    'SketchRecord',
    'arc_geometry',
    'canonical_key',
    'decode_row',
    'decode_sketch',
    'dedup_records',
    'encode_sketch',
    'filter_by_size',
    'gen_synthetic',
    'kind_histogram',
    'normalize_sketch',
    'read_records',
    'render_svg',
    'write_records',
]
