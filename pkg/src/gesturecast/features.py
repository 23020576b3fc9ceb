"""Geometry primitives and the built-in gesture features.

Every feature is a pure function Gesture -> float. Conventions:
  * path length sums intra-stroke point distances only (in-air jumps excluded)
  * the first/last pair spans the whole gesture (first point of the first
    stroke to the last point of the last stroke)
  * angle features run on a spatially resampled path (64 points per stroke)
    so raw device sampling density cannot bias them
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateFeatureError, DegenerateInputError, UnknownFeatureError
from .gestures import Gesture, Stroke, TouchPoint, gesture_duration

EPS = 1e-9  # quantities below this (in their own unit) are treated as vanishing
RESAMPLE_POINTS = 64  # per stroke, for angle features and corner detection
CORNER_ANGLE_DEG = 40.0  # turning angle that marks a corner
CORNER_WINDOW = 2  # +- points around a sample when measuring its turning angle
CORNER_SUPPRESS_RADIUS = 3  # non-maximum suppression radius, in samples
CURVINESS_MAX_DEG = 19.0  # inter-segment angles at or above this are corners, not curviness


@dataclass(frozen=True)
class FeatureDefinition:
    id: str
    unit: str
    category: str  # performance | design | recognition
    description: str
    compute: Callable[[Gesture], float]


@dataclass(frozen=True)
class GeometrySummary:
    """Shared geometric quantities, computed once per gesture."""

    bounding_box: tuple[float, float, float, float]  # min_x, min_y, max_x, max_y
    convex_hull: tuple[tuple[float, float], ...]
    hull_area: float
    hull_perimeter: float
    hull_degenerate: bool
    path_length: float
    fl_distance: float
    resampled_path: tuple[np.ndarray | None, ...]  # (n,2) per stroke; None if zero-length


def _stroke_xy(stroke: Stroke) -> np.ndarray:
    return np.array([[p.x, p.y] for p in stroke.points], dtype=float)


def _dedup_consecutive(xy: np.ndarray, t: np.ndarray | None = None):
    """Drop points identical to their predecessor (needed for arc-length work)."""
    if len(xy) == 0:
        return (xy, t) if t is not None else xy
    keep = np.ones(len(xy), dtype=bool)
    keep[1:] = np.any(np.diff(xy, axis=0) != 0.0, axis=1)
    if t is not None:
        return xy[keep], t[keep]
    return xy[keep]


def _resample_stroke_xy(xy: np.ndarray, t: np.ndarray, n_points: int):
    """Equidistant resampling along arc length; returns (xy, t) or None."""
    xy, t = _dedup_consecutive(xy, t)
    if len(xy) < 2:
        return None
    seg = np.hypot(*np.diff(xy, axis=0).T)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = cum[-1]
    if total <= 0:
        return None
    target = np.linspace(0.0, total, n_points)
    rx = np.interp(target, cum, xy[:, 0])
    ry = np.interp(target, cum, xy[:, 1])
    rt = np.interp(target, cum, t)
    out = np.column_stack([rx, ry])
    out[0] = xy[0]
    out[-1] = xy[-1]
    return out, rt


def resample_spatial(gesture: Gesture, n_points: int) -> Gesture:
    """Resample every stroke to `n_points` equidistant points along its path."""
    if n_points < 3:
        raise ValueError("n_points must be at least 3")
    strokes = []
    for si, stroke in enumerate(gesture.strokes):
        xy = _stroke_xy(stroke)
        t = np.array([p.t for p in stroke.points], dtype=float)
        res = _resample_stroke_xy(xy, t, n_points)
        if res is None:
            raise DegenerateInputError(f"stroke {si} has zero path length")
        rxy, rt = res
        tid = stroke.touch_id
        strokes.append(Stroke(
            [TouchPoint(float(x), float(y), float(tt), tid) for (x, y), tt in zip(rxy, rt)]))
    return Gesture(strokes, metadata=gesture.metadata)


# --------------------------------------------------------------------------
# Convex hull (monotone chain)
# --------------------------------------------------------------------------

def convex_hull(points: Sequence[tuple[float, float]]):
    """Hull vertices (counter-clockwise), area, perimeter, degenerate flag.

    Collinear input degenerates to the two extreme points with area 0 and
    perimeter equal to twice the extent (out and back).
    """
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if not pts:
        raise ValueError("need at least one point")
    if len(pts) == 1:
        return tuple(pts), 0.0, 0.0, True

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = tuple(lower[:-1] + upper[:-1])

    if len(hull) < 3:
        a, b = pts[0], pts[-1]
        extent = math.hypot(b[0] - a[0], b[1] - a[1])
        return (a, b), 0.0, 2.0 * extent, True

    xs = np.array([p[0] for p in hull])
    ys = np.array([p[1] for p in hull])
    area = 0.5 * abs(np.dot(xs, np.roll(ys, -1)) - np.dot(ys, np.roll(xs, -1)))
    perimeter = float(np.hypot(np.diff(np.append(xs, xs[0])),
                               np.diff(np.append(ys, ys[0]))).sum())
    return hull, float(area), perimeter, False


# --------------------------------------------------------------------------
# Geometry summary
# --------------------------------------------------------------------------

def geometry_summary(gesture: Gesture) -> GeometrySummary:
    all_xy = np.array([[p.x, p.y] for p in gesture.points()], dtype=float)
    min_x, min_y = all_xy.min(axis=0)
    max_x, max_y = all_xy.max(axis=0)

    path_length = 0.0
    resampled = []
    for stroke in gesture.strokes:
        xy = _stroke_xy(stroke)
        if len(xy) >= 2:
            path_length += float(np.hypot(*np.diff(xy, axis=0).T).sum())
        t = np.array([p.t for p in stroke.points], dtype=float)
        res = _resample_stroke_xy(xy, t, RESAMPLE_POINTS)
        resampled.append(res[0] if res is not None else None)

    first = gesture.strokes[0].points[0]
    last = gesture.strokes[-1].points[-1]
    fl = math.hypot(last.x - first.x, last.y - first.y)

    hull, area, perimeter, degenerate = convex_hull(map(tuple, all_xy))
    return GeometrySummary(
        bounding_box=(float(min_x), float(min_y), float(max_x), float(max_y)),
        convex_hull=hull, hull_area=area, hull_perimeter=perimeter,
        hull_degenerate=degenerate, path_length=path_length, fl_distance=fl,
        resampled_path=tuple(resampled))


# --------------------------------------------------------------------------
# Corner detection and self-intersections
# --------------------------------------------------------------------------

def _turning_angles(xy: np.ndarray, window: int) -> np.ndarray:
    """Unsigned angle at each sample between the +-window chords, radians.

    Entries without a full window on both sides are zero.
    """
    n = len(xy)
    out = np.zeros(n)
    if n < 2 * window + 1:
        return out
    back = xy[window:n - window] - xy[:n - 2 * window]
    fwd = xy[2 * window:] - xy[window:n - window]
    dot = np.sum(back * fwd, axis=1)
    crs = back[:, 0] * fwd[:, 1] - back[:, 1] * fwd[:, 0]
    out[window:n - window] = np.arctan2(np.abs(crs), dot)
    return out


def detect_corners(gesture: Gesture) -> int:
    """Number of path fragments: per stroke, corners + 1, summed over strokes."""
    summary = geometry_summary(gesture)
    return _detect_corners(summary)


def _detect_corners(summary: GeometrySummary) -> int:
    threshold = math.radians(CORNER_ANGLE_DEG)
    segments = 0
    for xy in summary.resampled_path:
        if xy is None:
            segments += 1
            continue
        angles = _turning_angles(xy, CORNER_WINDOW)
        candidates = np.nonzero(angles > threshold)[0]
        # Non-maximum suppression: larger angles win, earlier index breaks ties.
        order = sorted(candidates, key=lambda i: (-angles[i], i))
        accepted: list[int] = []
        for i in order:
            if all(abs(i - j) > CORNER_SUPPRESS_RADIUS for j in accepted):
                accepted.append(i)
        segments += len(accepted) + 1
    return segments


def _gesture_segments(gesture: Gesture):
    """Non-degenerate polyline segments as (stroke_idx, seg_idx, p, q)."""
    segs = []
    for si, stroke in enumerate(gesture.strokes):
        xy = _stroke_xy(stroke)
        for k in range(len(xy) - 1):
            if xy[k][0] != xy[k + 1][0] or xy[k][1] != xy[k + 1][1]:
                segs.append((si, k, xy[k], xy[k + 1]))
    return segs


def _on_segment(pt: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    """True if pt lies within tol (px) of segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return bool(np.hypot(*(pt - a)) <= tol)
    u = float((pt - a) @ ab) / denom
    u = min(max(u, 0.0), 1.0)
    closest = a + u * ab
    return bool(np.hypot(*(pt - closest)) <= tol)


def count_self_intersections(gesture: Gesture, tol: float = EPS) -> int:
    """Transversal crossings between non-adjacent segments of the whole gesture.

    Adjacent segments (consecutive within one stroke) are ignored. A contact
    point that is a shared endpoint of both segments is path structure, not a
    crossing. Distinct segment pairs meeting at one location count once.
    """
    segs = _gesture_segments(gesture)
    n = len(segs)
    if n < 2:
        return 0

    p = np.array([s[2] for s in segs])
    q = np.array([s[3] for s in segs])
    lo = np.minimum(p, q) - tol
    hi = np.maximum(p, q) + tol
    stroke_ids = np.array([s[0] for s in segs])
    seg_ids = np.array([s[1] for s in segs])

    # Bounding-box prefilter over all i<j pairs.
    overlap = (
        (lo[:, None, 0] <= hi[None, :, 0]) & (hi[:, None, 0] >= lo[None, :, 0])
        & (lo[:, None, 1] <= hi[None, :, 1]) & (hi[:, None, 1] >= lo[None, :, 1]))
    adjacent = (stroke_ids[:, None] == stroke_ids[None, :]) & (
        np.abs(seg_ids[:, None] - seg_ids[None, :]) <= 1)
    cand = np.argwhere(np.triu(overlap & ~adjacent, k=1))

    counted: list[np.ndarray] = []

    def add_point(pt: np.ndarray):
        for other in counted:
            if np.hypot(*(pt - other)) <= tol:
                return
        counted.append(pt)

    for i, j in cand:
        a, b = p[i], q[i]
        c, d = p[j], q[j]
        r = b - a
        s = d - c
        denom = r[0] * s[1] - r[1] * s[0]
        d1 = s[0] * (a[1] - c[1]) - s[1] * (a[0] - c[0])
        d2 = s[0] * (b[1] - c[1]) - s[1] * (b[0] - c[0])
        d3 = r[0] * (c[1] - a[1]) - r[1] * (c[0] - a[0])
        d4 = r[0] * (d[1] - a[1]) - r[1] * (d[0] - a[0])
        if d1 * d2 < 0 and d3 * d4 < 0 and denom != 0:
            t_num = (c[0] - a[0]) * s[1] - (c[1] - a[1]) * s[0]
            add_point(a + (t_num / denom) * r)
            continue
        # Touching cases: an endpoint of one segment lies on the other.
        for pt, own_a, own_b, seg_a, seg_b in (
                (a, c, d, c, d), (b, c, d, c, d), (c, a, b, a, b), (d, a, b, a, b)):
            if not _on_segment(pt, seg_a, seg_b, tol):
                continue
            endpoint_of_other = (np.hypot(*(pt - seg_a)) <= tol
                                 or np.hypot(*(pt - seg_b)) <= tol)
            if endpoint_of_other:
                continue  # shared vertex between the two segments: path structure
            add_point(pt)
    return len(counted)


# --------------------------------------------------------------------------
# Feature implementations
# --------------------------------------------------------------------------

def _require(value: float, what: str) -> float:
    if value < EPS:
        raise DegenerateFeatureError(f"{what} is below {EPS:g}; feature undefined")
    return value


def _box(summary: GeometrySummary):
    min_x, min_y, max_x, max_y = summary.bounding_box
    return max_x - min_x, max_y - min_y


def _angle_sum(summary: GeometrySummary, max_angle_rad: float | None) -> float:
    total = 0.0
    for xy in summary.resampled_path:
        if xy is None:
            continue
        angles = _turning_angles(xy, 1)
        if max_angle_rad is not None:
            angles = angles[angles < max_angle_rad]
        total += float(np.abs(angles).sum())
    return total


def _f_production_time(g: Gesture, s: GeometrySummary) -> float:
    return gesture_duration(g)


def _f_avg_speed(g: Gesture, s: GeometrySummary) -> float:
    return s.path_length / _require(gesture_duration(g), "production time")


def _f_line_similarity(g: Gesture, s: GeometrySummary) -> float:
    return s.fl_distance / _require(s.path_length, "path length")


def _f_aspect_ratio(g: Gesture, s: GeometrySummary) -> float:
    w, h = _box(s)
    return w / _require(h, "bounding box height")


def _f_turning_angle(g: Gesture, s: GeometrySummary) -> float:
    return _angle_sum(s, None)


def _f_box_area(g: Gesture, s: GeometrySummary) -> float:
    w, h = _box(s)
    return w * h


def _f_curviness(g: Gesture, s: GeometrySummary) -> float:
    return _angle_sum(s, math.radians(CURVINESS_MAX_DEG))


def _f_density(g: Gesture, s: GeometrySummary) -> float:
    # Closed gestures have a vanishing first-last distance; the epsilon floor
    # yields a very large finite density instead of an error.
    return s.path_length / max(s.fl_distance, EPS)


def _f_aspect(g: Gesture, s: GeometrySummary) -> float:
    w, h = _box(s)
    return abs(math.pi / 4.0 - math.atan2(h, w))


def _f_path_length(g: Gesture, s: GeometrySummary) -> float:
    return s.path_length


def _f_fl_distance(g: Gesture, s: GeometrySummary) -> float:
    return s.fl_distance


def _f_num_segments(g: Gesture, s: GeometrySummary) -> float:
    return float(_detect_corners(s))


def _f_num_intersections(g: Gesture, s: GeometrySummary) -> float:
    return float(count_self_intersections(g))


def _f_lp_ratio(g: Gesture, s: GeometrySummary) -> float:
    return s.path_length / _require(s.hull_perimeter, "hull perimeter")


def _f_lb_ratio(g: Gesture, s: GeometrySummary) -> float:
    w, h = _box(s)
    return s.path_length / _require(math.hypot(w, h), "bounding box diagonal")


def _f_hb_ratio(g: Gesture, s: GeometrySummary) -> float:
    if s.hull_degenerate:
        raise DegenerateFeatureError("convex hull has zero area")
    w, h = _box(s)
    return s.hull_area / _require(w * h, "bounding box area")


def _f_perimeter_efficiency(g: Gesture, s: GeometrySummary) -> float:
    if s.hull_degenerate:
        raise DegenerateFeatureError("convex hull has zero area")
    return 2.0 * math.sqrt(math.pi * s.hull_area) / _require(s.hull_perimeter,
                                                             "hull perimeter")


def _f_perimeter_to_area(g: Gesture, s: GeometrySummary) -> float:
    if s.hull_degenerate:
        raise DegenerateFeatureError("convex hull has zero area")
    return s.hull_perimeter / _require(s.hull_area, "hull area")


_BUILTINS: list[tuple[str, str, str, str, Callable]] = [
    ("production_time", "s", "performance",
     "Total gesture production time, spanning in-air gaps", _f_production_time),
    ("avg_speed", "px/s", "performance",
     "Path length divided by production time", _f_avg_speed),
    ("line_similarity", "unitless", "performance",
     "First-to-last point distance divided by path length", _f_line_similarity),
    ("aspect_ratio", "unitless", "performance",
     "Bounding box width divided by height", _f_aspect_ratio),
    ("turning_angle", "rad", "performance",
     "Sum of absolute turning angles along the resampled path", _f_turning_angle),
    ("box_area", "px^2", "design",
     "Bounding box area", _f_box_area),
    ("curviness", "rad", "design",
     "Sum of absolute turning angles below the corner threshold", _f_curviness),
    ("density", "unitless", "design",
     "Path length divided by first-to-last point distance", _f_density),
    ("aspect", "rad", "recognition",
     "Absolute deviation of the bounding box diagonal angle from 45 degrees", _f_aspect),
    ("path_length", "px", "recognition",
     "Sum of distances between adjacent points within strokes", _f_path_length),
    ("fl_distance", "px", "recognition",
     "Distance between the first and last points", _f_fl_distance),
    ("num_segments", "unitless", "recognition",
     "Number of path fragments after corner detection", _f_num_segments),
    ("num_intersections", "unitless", "recognition",
     "Number of transversal self-crossings of the path", _f_num_intersections),
    ("lp_ratio", "unitless", "recognition",
     "Path length divided by convex hull perimeter", _f_lp_ratio),
    ("lb_ratio", "unitless", "recognition",
     "Path length divided by the bounding box diagonal", _f_lb_ratio),
    ("hb_ratio", "unitless", "recognition",
     "Convex hull area divided by bounding box area", _f_hb_ratio),
    ("perimeter_efficiency", "unitless", "recognition",
     "Hull compactness: 2*sqrt(pi*hull area) / hull perimeter", _f_perimeter_efficiency),
    ("perimeter_to_area", "px^-1", "recognition",
     "Convex hull perimeter divided by hull area", _f_perimeter_to_area),
]


def _make_definition(fid, unit, category, description, impl) -> FeatureDefinition:
    def compute(gesture: Gesture) -> float:
        return float(impl(gesture, geometry_summary(gesture)))

    return FeatureDefinition(id=fid, unit=unit, category=category,
                             description=description, compute=compute)


_REGISTRY: dict[str, FeatureDefinition] = {
    fid: _make_definition(fid, unit, cat, desc, impl)
    for fid, unit, cat, desc, impl in _BUILTINS
}
_IMPLS: dict[str, Callable] = {fid: impl for fid, unit, cat, desc, impl in _BUILTINS}


def registry() -> list[FeatureDefinition]:
    """The built-in features, in their canonical order."""
    return list(_REGISTRY.values())


def get_feature(feature_id: str) -> FeatureDefinition:
    try:
        return _REGISTRY[feature_id]
    except KeyError:
        raise UnknownFeatureError(f"unknown feature id {feature_id!r}") from None


def compute_feature(feature_id: str, gesture: Gesture) -> float:
    return get_feature(feature_id).compute(gesture)


def evaluate_builtin(feature_id: str, gesture: Gesture,
                     summary: GeometrySummary) -> float:
    """Evaluate a built-in against a precomputed summary (pipeline hot path)."""
    try:
        impl = _IMPLS[feature_id]
    except KeyError:
        raise UnknownFeatureError(f"unknown feature id {feature_id!r}") from None
    return float(impl(gesture, summary))


def is_builtin(feature_id: str) -> bool:
    return feature_id in _REGISTRY
