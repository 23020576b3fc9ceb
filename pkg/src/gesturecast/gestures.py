"""Gesture data model, validation, serialization, and corpus ingestion.

Coordinates are pixels, timestamps are milliseconds since gesture start.
Kinematic code converts to seconds internally; files and wire payloads
always carry milliseconds.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .errors import CorpusFormatError, ValidationFailure

# Wire format of one point is positional: [x, y, t, touchId].
# touchId may be omitted on input and defaults to 0.


@dataclass(frozen=True)
class TouchPoint:
    x: float
    y: float
    t: float  # milliseconds
    touch_id: int = 0


@dataclass(frozen=True)
class Stroke:
    """Point sequence between one touch-down and the next touch-up."""

    points: tuple[TouchPoint, ...]

    def __init__(self, points: Iterable[TouchPoint]):
        object.__setattr__(self, "points", tuple(points))

    @property
    def touch_id(self) -> int:
        return self.points[0].touch_id if self.points else 0

    def duration_ms(self) -> float:
        return self.points[-1].t - self.points[0].t


@dataclass(frozen=True)
class Gesture:
    strokes: tuple[Stroke, ...]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __init__(self, strokes: Iterable[Stroke], metadata: Mapping[str, object] | None = None):
        object.__setattr__(self, "strokes", tuple(strokes))
        object.__setattr__(self, "metadata", MappingProxyType(dict(metadata or {})))

    def points(self) -> Iterator[TouchPoint]:
        for stroke in self.strokes:
            yield from stroke.points

    def point_count(self) -> int:
        return sum(len(s.points) for s in self.strokes)


@dataclass(frozen=True)
class Corpus:
    """Gestures annotated with subject / gesture-type / trial labels."""

    gestures: tuple[Gesture, ...]

    def __init__(self, gestures: Iterable[Gesture]):
        object.__setattr__(self, "gestures", tuple(gestures))

    def subjects(self) -> list[str]:
        return sorted({str(g.metadata["subject"]) for g in self.gestures})

    def gesture_types(self) -> list[str]:
        return sorted({str(g.metadata["gestureType"]) for g in self.gestures})

    def filter(self, subject: str | None = None, gesture_type: str | None = None,
               exclude_subject: str | None = None) -> list[Gesture]:
        out = []
        for g in self.gestures:
            if subject is not None and str(g.metadata["subject"]) != subject:
                continue
            if exclude_subject is not None and str(g.metadata["subject"]) == exclude_subject:
                continue
            if gesture_type is not None and str(g.metadata["gestureType"]) != gesture_type:
                continue
            out.append(g)
        return out


def validate(gesture: Gesture) -> list[str]:
    """Check all data-model invariants; violations are returned, not raised."""
    violations: list[str] = []
    if not gesture.strokes:
        violations.append("empty gesture: at least one stroke required")
        return violations
    total = 0
    for si, stroke in enumerate(gesture.strokes):
        n = len(stroke.points)
        total += n
        if n < 2:
            violations.append(f"stroke {si}: fewer than 2 points")
        ids = {p.touch_id for p in stroke.points}
        if len(ids) > 1:
            violations.append(f"stroke {si}: mixed touch ids {sorted(ids)}")
        prev_t = None
        for pi, p in enumerate(stroke.points):
            if not (math.isfinite(p.x) and math.isfinite(p.y) and math.isfinite(p.t)):
                violations.append(f"stroke {si} point {pi}: non-finite coordinate")
                continue
            if p.t < 0:
                violations.append(f"stroke {si} point {pi}: negative timestamp")
            if p.touch_id < 0 or p.touch_id != int(p.touch_id):
                violations.append(f"stroke {si} point {pi}: invalid touch id {p.touch_id!r}")
            if prev_t is not None and p.t < prev_t:
                violations.append(f"stroke {si} point {pi}: non-monotonic timestamps")
            prev_t = p.t
    if total < 2:
        violations.append("gesture has fewer than 2 points in total")
    return violations


def require_valid(gesture: Gesture, context: str = "gesture") -> None:
    violations = validate(gesture)
    if violations:
        raise ValidationFailure(violations, context=context)


def gesture_duration(gesture: Gesture) -> float:
    """Total production time in seconds, spanning in-air gaps between strokes."""
    ts = [p.t for p in gesture.points()]
    return (max(ts) - min(ts)) / 1000.0


# --------------------------------------------------------------------------
# Serialization: canonical JSON profile
# --------------------------------------------------------------------------

def strokes_to_obj(gesture: Gesture) -> list[list[list[float]]]:
    """Positional [x, y, t, touchId] arrays, one list per stroke."""
    return [
        [[p.x, p.y, p.t, p.touch_id] for p in stroke.points]
        for stroke in gesture.strokes
    ]


def strokes_from_obj(obj: object, context: str = "strokes") -> tuple[Stroke, ...]:
    if not isinstance(obj, (list, tuple)):
        raise CorpusFormatError(f"{context}: expected a list of strokes")
    strokes = []
    for si, raw_stroke in enumerate(obj):
        if not isinstance(raw_stroke, (list, tuple)):
            raise CorpusFormatError(f"{context}: stroke {si} is not a list")
        points = []
        for pi, raw in enumerate(raw_stroke):
            if not isinstance(raw, (list, tuple)) or len(raw) not in (3, 4):
                raise CorpusFormatError(
                    f"{context}: stroke {si} point {pi} must be [x,y,t] or [x,y,t,touchId]")
            try:
                x, y, t = float(raw[0]), float(raw[1]), float(raw[2])
                touch_id = int(raw[3]) if len(raw) == 4 else 0
            except (TypeError, ValueError) as exc:
                raise CorpusFormatError(
                    f"{context}: stroke {si} point {pi}: non-numeric value ({exc})") from None
            points.append(TouchPoint(x, y, t, touch_id))
        strokes.append(Stroke(points))
    return tuple(strokes)


def gesture_to_obj(gesture: Gesture) -> dict:
    return {"metadata": dict(gesture.metadata), "strokes": strokes_to_obj(gesture)}


def gesture_from_obj(obj: object, context: str = "gesture") -> Gesture:
    if not isinstance(obj, dict) or "strokes" not in obj:
        raise CorpusFormatError(f"{context}: expected an object with a 'strokes' key")
    metadata = obj.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise CorpusFormatError(f"{context}: metadata must be an object")
    return Gesture(strokes_from_obj(obj["strokes"], context=context), metadata=metadata)


def save_gesture(gesture: Gesture, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(gesture_to_obj(gesture), indent=1) + "\n")


def load_gesture(path: str | os.PathLike) -> Gesture:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return gesture_from_obj(obj, context=str(path))


# --------------------------------------------------------------------------
# Corpus ingestion
# --------------------------------------------------------------------------

CORPUS_FORMATS = ("canonical-json", "csv-directory")
_REQUIRED_METADATA = ("subject", "gestureType", "trial")


def _scale_time(gesture: Gesture, time_unit: str) -> Gesture:
    if time_unit == "ms":
        return gesture
    if time_unit != "s":
        raise CorpusFormatError(f"unknown time unit {time_unit!r} (use 'ms' or 's')")
    strokes = [
        Stroke([TouchPoint(p.x, p.y, p.t * 1000.0, p.touch_id) for p in s.points])
        for s in gesture.strokes
    ]
    return Gesture(strokes, metadata=gesture.metadata)


def _check_corpus_entry(gesture: Gesture, name: str) -> None:
    missing = [k for k in _REQUIRED_METADATA if k not in gesture.metadata]
    if missing:
        raise ValidationFailure([f"missing metadata keys {missing}"], context=name)
    violations = validate(gesture)
    if violations:
        raise ValidationFailure(violations, context=name)


def _load_csv_gesture(path: Path) -> Gesture:
    strokes: list[list[TouchPoint]] = []
    current: list[TouchPoint] = []
    last_id: int | None = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            if current:
                strokes.append(current)
                current, last_id = [], None
            continue
        cols = [c.strip() for c in line.split(",")]
        if lineno == 1 and cols and not _is_number(cols[0]):
            continue  # header row
        if len(cols) not in (3, 4):
            raise CorpusFormatError(f"{path}: line {lineno}: expected 3 or 4 columns")
        try:
            x, y, t = float(cols[0]), float(cols[1]), float(cols[2])
            touch_id = int(float(cols[3])) if len(cols) == 4 else 0
        except ValueError:
            raise CorpusFormatError(f"{path}: line {lineno}: non-numeric value") from None
        if last_id is not None and touch_id != last_id and current:
            strokes.append(current)
            current = []
        current.append(TouchPoint(x, y, t, touch_id))
        last_id = touch_id
    if current:
        strokes.append(current)
    if not strokes:
        raise CorpusFormatError(f"{path}: no points found")
    # Filename profile: <subject>__<gestureType>__<trial>.csv
    parts = path.stem.split("__")
    metadata: dict[str, object] = {"subject": parts[0] if parts else path.stem}
    if len(parts) > 1:
        metadata["gestureType"] = parts[1]
    if len(parts) > 2:
        metadata["trial"] = parts[2]
    return Gesture([Stroke(pts) for pts in strokes], metadata=metadata)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_corpus(path: str | os.PathLike, format: str = "canonical-json",
                time_unit: str = "ms") -> Corpus:
    """Load every gesture file under `path` and validate the whole corpus."""
    root = Path(path)
    if format not in CORPUS_FORMATS:
        raise CorpusFormatError(f"unknown corpus format {format!r}")
    if not root.is_dir():
        raise CorpusFormatError(f"{root}: not a directory")
    suffix = ".json" if format == "canonical-json" else ".csv"
    files = sorted(p for p in root.rglob(f"*{suffix}") if p.is_file())
    if not files:
        raise CorpusFormatError(f"{root}: no {suffix} gesture files found")
    gestures = []
    bad: list[str] = []
    for f in files:
        gesture = load_gesture(f) if format == "canonical-json" else _load_csv_gesture(f)
        gesture = _scale_time(gesture, time_unit)
        try:
            _check_corpus_entry(gesture, str(f))
        except ValidationFailure as exc:
            bad.append(str(exc))
            continue
        gestures.append(gesture)
    if bad:
        raise ValidationFailure(bad, context=f"corpus {root}")
    return Corpus(gestures)


def save_corpus(corpus: Corpus, path: str | os.PathLike) -> list[Path]:
    """Write one canonical JSON file per gesture; returns the paths written."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for i, g in enumerate(corpus.gestures):
        meta = g.metadata
        name = "{}__{}__{}.json".format(
            meta.get("subject", "s"), meta.get("gestureType", "g"), meta.get("trial", i))
        target = root / name
        save_gesture(g, target)
        written.append(target)
    return written
