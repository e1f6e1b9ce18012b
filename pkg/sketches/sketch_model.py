"""
CAD sketch data model

Primitive types, the fixed-width composite row encoding used by the
diffusion model, decoding, normalization into the unit square, canonical
keys for deduplication, arc geometry and a synthetic corpus generator.

Row layout (width 21):
    [0:2]   construction flag one-hot [non-construction, construction]
    [2:7]   class one-hot [Line, Circle, Arc, Point, None]
    [7:11]  line   (x1, y1, x2, y2)
    [11:14] circle (x, y, r)
    [14:19] arc    (x1, y1, x2, y2, kappa)
    [19:21] point  (x, y)

kappa is a signed radius: |kappa| is the arc radius and its sign picks the
side of the chord holding the center (and the sweep direction).

@version: v0.1.0
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from diffusion.gs_diffusion import smooth_onehot

logger = logging.getLogger(__name__)


class CapacityError(ValueError):
    """Raised when a sketch has more primitives than the matrix holds"""
    pass


class DegenerateSketchError(ValueError):
    """Raised when a sketch has no spatial extent"""
    pass


class ImpossibleArcError(ValueError):
    """Raised when arc endpoints and signed radius admit no circle"""
    pass


class PrimitiveKind(IntEnum):
    LINE = 0
    CIRCLE = 1
    ARC = 2
    POINT = 3
    NONE = 4


class Provenance(str, Enum):
    SYNTHETIC = 'synthetic'
    IMPORTED = 'imported'


class SketchLayout:
    """Named slices of one row of the sketch matrix"""

    N_MAX = 16
    WIDTH = 21

    FLAG = slice(0, 2)
    CLASS = slice(2, 7)
    LINE = slice(7, 11)
    CIRCLE = slice(11, 14)
    ARC = slice(14, 19)
    POINT = slice(19, 21)
    PARAMS = slice(7, 21)

    NUM_FLAGS = 2
    NUM_CLASSES = 5

    PARAM_SLICES: Dict[PrimitiveKind, slice] = {
        PrimitiveKind.LINE: LINE,
        PrimitiveKind.CIRCLE: CIRCLE,
        PrimitiveKind.ARC: ARC,
        PrimitiveKind.POINT: POINT,
    }

    # x / y coordinate or length (radius, kappa), per parameter
    PARAM_ROLES: Dict[PrimitiveKind, str] = {
        PrimitiveKind.LINE: 'xyxy',
        PrimitiveKind.CIRCLE: 'xyl',
        PrimitiveKind.ARC: 'xyxyl',
        PrimitiveKind.POINT: 'xy',
        PrimitiveKind.NONE: '',
    }

    @classmethod
    def param_count(cls, kind: PrimitiveKind) -> int:
        return len(cls.PARAM_ROLES[kind])

    @classmethod
    def param_mask(cls, kinds: np.ndarray) -> np.ndarray:
        """
        Boolean mask over the parameter columns selecting each row's own slice

        Args:
            kinds: integer class labels, shape (..., n)

        Returns:
            np.ndarray: shape (..., n, 14)
        """
        kinds = np.asarray(kinds)
        mask = np.zeros(kinds.shape + (cls.WIDTH,), dtype=bool)
        for kind, sl in cls.PARAM_SLICES.items():
            mask[..., sl] |= (kinds == kind)[..., None]
        return mask[..., cls.PARAMS]


@dataclass(frozen=True)
class Primitive:
    """
    One decoded geometric primitive

    Args:
        kind: primitive type
        construction: construction aid flag (rendered dashed)
        params: per-kind parameters in normalized sketch units
    """
    kind: PrimitiveKind
    construction: bool = False
    params: Tuple[float, ...] = ()

    def __post_init__(self):
        kind = PrimitiveKind(self.kind)
        params = tuple(float(p) for p in self.params)
        expected = SketchLayout.param_count(kind)
        if len(params) != expected:
            raise ValueError(f"{kind.name} takes {expected} parameters, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ValueError(f"{kind.name} parameters must be finite, got {params}")
        object.__setattr__(self, 'kind', kind)
        object.__setattr__(self, 'construction', bool(self.construction))
        object.__setattr__(self, 'params', params)


@dataclass
class SketchRecord:
    """
    A sketch with a persistent identity

    Args:
        id: record identifier
        primitives: primitives in storage order (order carries no meaning)
        provenance: where the record came from
    """
    id: str
    primitives: List[Primitive] = field(default_factory=list)
    provenance: Provenance = Provenance.SYNTHETIC

    def __post_init__(self):
        self.provenance = Provenance(self.provenance)
        for p in self.primitives:
            if not isinstance(p, Primitive):
                raise TypeError(f"expected Primitive, got {type(p).__name__}")

    def kinds(self) -> List[PrimitiveKind]:
        return [p.kind for p in self.primitives]


def encode_sketch(rec: SketchRecord, k: float = 0.99, n_max: int = SketchLayout.N_MAX) -> np.ndarray:
    """
    Encode a record as an (n_max, 21) matrix

    Each primitive fills its own parameter slice and zeroes the others; flag
    and class blocks are smoothed one-hots. Padding rows are non-construction
    None rows with zero parameters.

    Raises:
        CapacityError: If the record has more than n_max primitives
    """
    if len(rec.primitives) > n_max:
        raise CapacityError(f"record {rec.id} has {len(rec.primitives)} primitives, "
                            f"capacity is {n_max}")
    kinds = np.full(n_max, int(PrimitiveKind.NONE))
    flags = np.zeros(n_max, dtype=int)
    matrix = np.zeros((n_max, SketchLayout.WIDTH))
    for i, p in enumerate(rec.primitives):
        kinds[i] = int(p.kind)
        flags[i] = int(p.construction)
        if p.kind != PrimitiveKind.NONE:
            matrix[i, SketchLayout.PARAM_SLICES[p.kind]] = p.params
    matrix[:, SketchLayout.FLAG] = smooth_onehot(flags, SketchLayout.NUM_FLAGS, k)
    matrix[:, SketchLayout.CLASS] = smooth_onehot(kinds, SketchLayout.NUM_CLASSES, k)
    return matrix


def decode_row(row) -> Primitive:
    """
    Decode one matrix row by argmax over the flag and class blocks

    Ties go to the lowest index.
    """
    row = np.asarray(row, dtype=np.float64)
    kind = PrimitiveKind(int(np.argmax(row[SketchLayout.CLASS])))
    construction = int(np.argmax(row[SketchLayout.FLAG])) == 1
    if kind == PrimitiveKind.NONE:
        return Primitive(kind, construction)
    return Primitive(kind, construction, tuple(row[SketchLayout.PARAM_SLICES[kind]]))


def decode_sketch(matrix, rec_id: str = 'decoded',
                  provenance: Provenance = Provenance.SYNTHETIC) -> SketchRecord:
    """Decode every row of a sketch matrix, dropping None rows"""
    primitives = [decode_row(row) for row in np.asarray(matrix, dtype=np.float64)]
    return SketchRecord(rec_id, [p for p in primitives if p.kind != PrimitiveKind.NONE], provenance)


class ArcGeometry(NamedTuple):
    center: Tuple[float, float]
    radius: float
    start_angle: float
    end_angle: float
    sweep: float
    ccw: bool


# relative slack on the chord test; radii within it of half the chord
# resolve to exact semicircles
ARC_TOLERANCE = 1e-9


def arc_geometry(x1: float, y1: float, x2: float, y2: float, kappa: float) -> ArcGeometry:
    """
    Resolve an arc from its endpoints and signed radius

    The center lies on the chord's perpendicular bisector, on the left of
    p1 -> p2 when kappa > 0 and on the right otherwise. The arc is the minor
    arc from p1 to p2, counter-clockwise when kappa > 0.

    Returns:
        ArcGeometry: center, radius, start/end angles, sweep angle and direction

    Raises:
        ImpossibleArcError: If the endpoints coincide or 2|kappa| < chord
    """
    dx, dy = x2 - x1, y2 - y1
    chord = math.hypot(dx, dy)
    if chord == 0.0:
        raise ImpossibleArcError(f"arc endpoints coincide at ({x1}, {y1})")
    radius = abs(kappa)
    if 2.0 * radius < chord * (1.0 - ARC_TOLERANCE):
        raise ImpossibleArcError(f"arc radius {radius} too small for chord {chord}")
    half = chord / 2.0
    if 2.0 * radius <= chord * (1.0 + ARC_TOLERANCE):
        offset, sweep = 0.0, math.pi
    else:
        offset = math.sqrt((radius - half) * (radius + half))
        sweep = 2.0 * math.asin(half / radius)
    side = 1.0 if kappa > 0 else -1.0
    nx, ny = -dy / chord, dx / chord
    cx = (x1 + x2) / 2.0 + side * offset * nx
    cy = (y1 + y2) / 2.0 + side * offset * ny
    return ArcGeometry(
        center=(cx, cy),
        radius=radius,
        start_angle=math.atan2(y1 - cy, x1 - cx),
        end_angle=math.atan2(y2 - cy, x2 - cx),
        sweep=sweep,
        ccw=kappa > 0,
    )


def sample_arc_points(geom: ArcGeometry, num: int = 32) -> np.ndarray:
    """Points along an arc from its start to its end, shape (num, 2)"""
    direction = 1.0 if geom.ccw else -1.0
    angles = geom.start_angle + direction * geom.sweep * np.linspace(0.0, 1.0, num)
    cx, cy = geom.center
    return np.stack([cx + geom.radius * np.cos(angles), cy + geom.radius * np.sin(angles)], axis=-1)


def _arc_extent_points(geom: ArcGeometry) -> List[Tuple[float, float]]:
    cx, cy = geom.center
    r = geom.radius
    points = []
    for quadrant in range(4):
        theta = quadrant * math.pi / 2.0
        if geom.ccw:
            travelled = (theta - geom.start_angle) % (2.0 * math.pi)
        else:
            travelled = (geom.start_angle - theta) % (2.0 * math.pi)
        if travelled <= geom.sweep:
            points.append((cx + r * math.cos(theta), cy + r * math.sin(theta)))
    return points


def _extent_points(p: Primitive) -> List[Tuple[float, float]]:
    q = p.params
    if p.kind == PrimitiveKind.LINE:
        return [(q[0], q[1]), (q[2], q[3])]
    if p.kind == PrimitiveKind.CIRCLE:
        x, y, r = q
        return [(x - abs(r), y - abs(r)), (x + abs(r), y + abs(r))]
    if p.kind == PrimitiveKind.ARC:
        return [(q[0], q[1]), (q[2], q[3])] + _arc_extent_points(arc_geometry(*q))
    if p.kind == PrimitiveKind.POINT:
        return [(q[0], q[1])]
    return []


def bounding_box(rec: SketchRecord) -> Tuple[float, float, float, float]:
    """(xmin, ymin, xmax, ymax) of the rendered geometry"""
    points = [pt for p in rec.primitives for pt in _extent_points(p)]
    if not points:
        raise DegenerateSketchError(f"record {rec.id} has no geometry")
    arr = np.asarray(points)
    return (float(arr[:, 0].min()), float(arr[:, 1].min()),
            float(arr[:, 0].max()), float(arr[:, 1].max()))


def _transform(p: Primitive, cx: float, cy: float, scale: float) -> Primitive:
    params = []
    for value, role in zip(p.params, SketchLayout.PARAM_ROLES[p.kind]):
        if role == 'x':
            params.append((value - cx) * scale)
        elif role == 'y':
            params.append((value - cy) * scale)
        else:
            params.append(value * scale)
    return Primitive(p.kind, p.construction, tuple(params))


# boxes centered with unit extent to within this are left untouched
NORMALIZE_TOLERANCE = 1e-9


def normalize_sketch(rec: SketchRecord) -> SketchRecord:
    """
    Center the bounding box at the origin and scale its larger side to 1

    Radii and kappa scale with the coordinates, so geometry is preserved up
    to similarity and every primitive lands in [-0.5, 0.5]^2. A record that
    is already normalized comes back unchanged.

    Raises:
        DegenerateSketchError: If the sketch has zero extent
    """
    xmin, ymin, xmax, ymax = bounding_box(rec)
    extent = max(xmax - xmin, ymax - ymin)
    if not extent > 0.0:
        raise DegenerateSketchError(f"record {rec.id} has zero extent")
    cx, cy = (xmin + xmax) / 2.0, (ymin + ymax) / 2.0
    if max(abs(cx), abs(cy), abs(extent - 1.0)) <= NORMALIZE_TOLERANCE:
        return SketchRecord(rec.id, list(rec.primitives), rec.provenance)
    scale = 1.0 / extent
    return SketchRecord(rec.id, [_transform(p, cx, cy, scale) for p in rec.primitives],
                        rec.provenance)


QUANT_LEVELS = 256
COORD_RANGE = (-0.5, 0.5)
LENGTH_RANGE = (-1.0, 1.0)


def _quantize(value: float, lo: float, hi: float) -> int:
    level = math.floor((value - lo) / (hi - lo) * QUANT_LEVELS)
    return min(max(level, 0), QUANT_LEVELS - 1)


def canonical_key(rec: SketchRecord) -> bytes:
    """
    Order-free byte key of a normalized record

    Each primitive becomes bytes [kind, flag, q...] with parameters quantized
    to 8 bits (coordinates over [-0.5, 0.5], radius and kappa over [-1, 1]);
    rows are sorted and concatenated. The kind byte fixes the row length, so
    the concatenation is unambiguous.
    """
    rows = []
    for p in rec.primitives:
        quantized = []
        for value, role in zip(p.params, SketchLayout.PARAM_ROLES[p.kind]):
            lo, hi = LENGTH_RANGE if role == 'l' else COORD_RANGE
            quantized.append(_quantize(value, lo, hi))
        rows.append(bytes([int(p.kind), int(p.construction)] + quantized))
    return b''.join(sorted(rows))


def dedup_records(records: Iterable[SketchRecord]) -> Tuple[List[SketchRecord], int]:
    """
    Drop records whose canonical key was already seen

    Returns:
        Tuple[List[SketchRecord], int]: (first record of each key, duplicates removed)
    """
    seen = set()
    kept = []
    duplicates = 0
    for rec in records:
        key = canonical_key(rec)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        kept.append(rec)
    return kept, duplicates


def filter_by_size(records: Iterable[SketchRecord], min_primitives: int = 8,
                   max_primitives: int = SketchLayout.N_MAX) -> List[SketchRecord]:
    """Keep records whose primitive count lies in [min_primitives, max_primitives]"""
    if min_primitives < 1 or max_primitives < min_primitives:
        raise ValueError(f"invalid size range [{min_primitives}, {max_primitives}]")
    return [r for r in records if min_primitives <= len(r.primitives) <= max_primitives]


# Synthetic corpus
SYNTHETIC_MIN = 8
SYNTHETIC_MAX = 16


def _rotate(u: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * u[0] - s * u[1], s * u[0] + c * u[1]])


def _line(a: Sequence[float], b: Sequence[float], construction: bool = False) -> Primitive:
    return Primitive(PrimitiveKind.LINE, construction, (a[0], a[1], b[0], b[1]))


def _slot(rng: np.random.Generator) -> List[Primitive]:
    # two parallel lines closed by outward semicircular caps
    center = rng.uniform(-1.0, 1.0, size=2)
    length = rng.uniform(0.3, 1.0)
    radius = rng.uniform(0.05, 0.3)
    u = _rotate(np.array([1.0, 0.0]), rng.uniform(0.0, math.pi))
    v = np.array([-u[1], u[0]])
    top_right = center + length / 2 * u + radius * v
    bottom_right = center + length / 2 * u - radius * v
    top_left = center - length / 2 * u + radius * v
    bottom_left = center - length / 2 * u - radius * v
    return [
        _line(top_left, top_right),
        _line(bottom_left, bottom_right),
        Primitive(PrimitiveKind.ARC, False, (*bottom_right, *top_right, radius)),
        Primitive(PrimitiveKind.ARC, False, (*top_left, *bottom_left, radius)),
    ]


def _circle_with_mark(rng: np.random.Generator) -> List[Primitive]:
    x, y = rng.uniform(-1.0, 1.0, size=2)
    r = rng.uniform(0.05, 0.5)
    return [Primitive(PrimitiveKind.CIRCLE, False, (x, y, r)),
            Primitive(PrimitiveKind.POINT, False, (x, y))]


def _rectangle(rng: np.random.Generator) -> List[Primitive]:
    x0, y0 = rng.uniform(-1.0, 0.5, size=2)
    w, h = rng.uniform(0.1, 0.8, size=2)
    corners = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
    return [_line(corners[i], corners[(i + 1) % 4]) for i in range(4)]


def _construction_line(rng: np.random.Generator) -> List[Primitive]:
    a, b = rng.uniform(-1.0, 1.0, size=(2, 2))
    return [_line(a, b, construction=True)]


def _free_line(rng: np.random.Generator) -> List[Primitive]:
    a, b = rng.uniform(-1.0, 1.0, size=(2, 2))
    return [_line(a, b)]


def _free_point(rng: np.random.Generator) -> List[Primitive]:
    x, y = rng.uniform(-1.0, 1.0, size=2)
    return [Primitive(PrimitiveKind.POINT, False, (x, y))]


_FILLERS = (
    (4, _rectangle),
    (2, _circle_with_mark),
    (1, _construction_line),
    (1, _free_line),
    (1, _free_point),
)


def gen_synthetic(count: int, seed: int) -> List[SketchRecord]:
    """
    Generate normalized synthetic sketches of 8 to 16 primitives

    Every record holds a slot (2 lines + 2 arcs), a circle with a center
    point and a construction diagonal, then is filled up from rectangles,
    marked circles, construction lines, free lines and points. Deterministic
    given seed.

    Raises:
        ValueError: If count is negative
    """
    if count < 0:
        raise ValueError(f"count={count} must be >= 0")
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        target = int(rng.integers(SYNTHETIC_MIN, SYNTHETIC_MAX + 1))
        primitives = _slot(rng) + _circle_with_mark(rng) + _construction_line(rng)
        while len(primitives) < target:
            room = target - len(primitives)
            options = [make for size, make in _FILLERS if size <= room]
            make = options[int(rng.integers(len(options)))]
            primitives.extend(make(rng))
        records.append(normalize_sketch(SketchRecord(f"syn-{seed}-{i:06d}", primitives)))
    logger.debug("generated %d synthetic sketches (seed=%d)", count, seed)
    return records


def kind_histogram(records: Iterable[SketchRecord]) -> np.ndarray:
    """Normalized frequency of Line, Circle, Arc, Point over all primitives"""
    counts = np.zeros(4)
    for rec in records:
        for p in rec.primitives:
            if p.kind != PrimitiveKind.NONE:
                counts[int(p.kind)] += 1
    total = counts.sum()
    return counts / total if total > 0 else counts
