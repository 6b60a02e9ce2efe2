"""Sketch documents: authored 3D strokes, edit operations, canonical
serialization, digests, and scale calibration.

Documents are immutable values. ``apply_op`` returns a new document and never
touches its input, which keeps the operation log replayable: applying
``doc.op_log`` to an empty document reproduces ``doc`` byte for byte.

Stroke roles:
  contour  - primary outlines and transitions, must be preserved downstream
  scaffold - coarse volumetric/occupancy structure, guides completion
  anchor   - local geometry pinned to a specific shape or part
"""

from __future__ import annotations

import hashlib
import math
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (
    DegenerateStroke,
    DuplicateStrokeId,
    MalformedDocument,
    MalformedOp,
    NonFiniteCoordinate,
    NonPositiveLength,
    NonPositiveScale,
    NonPositiveSpacing,
    UnknownStroke,
)
from .geometry import Point3, Quaternion, polyline_length
from .jsoncanon import canonical_dumps, canonical_loads

SCHEMA_VERSION = 1


class Role(str, Enum):
    CONTOUR = "contour"
    SCAFFOLD = "scaffold"
    ANCHOR = "anchor"


class OpKind(str, Enum):
    ADD_STROKE = "add_stroke"
    DELETE_STROKE = "delete_stroke"
    TRANSFORM_STROKE = "transform_stroke"
    SET_ROLE = "set_role"
    SET_CALIBRATION = "set_calibration"


def _require_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedDocument(f"{what} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class Stroke:
    stroke_id: str
    author_id: str
    role: Role
    points: tuple[Point3, ...]
    created_at: int  # milliseconds since epoch
    color_index: int  # palette slot

    def validate(self) -> None:
        if not self.stroke_id or not isinstance(self.stroke_id, str):
            raise DegenerateStroke("stroke_id must be a non-empty string")
        if len(self.points) < 2:
            raise DegenerateStroke(f"stroke {self.stroke_id!r} has {len(self.points)} points")
        for p in self.points:
            if not p.is_finite():
                raise NonFiniteCoordinate(f"stroke {self.stroke_id!r} has non-finite point")
        if polyline_length(list(self.points)) <= 0.0:
            raise DegenerateStroke(f"stroke {self.stroke_id!r} has zero length")
        if isinstance(self.color_index, bool) or not isinstance(self.color_index, int) or self.color_index < 0:
            raise DegenerateStroke(f"stroke {self.stroke_id!r} has bad color_index {self.color_index!r}")
        if isinstance(self.created_at, bool) or not isinstance(self.created_at, int):
            raise DegenerateStroke(f"stroke {self.stroke_id!r} has bad created_at {self.created_at!r}")

    def length(self) -> float:
        return polyline_length(list(self.points))

    def to_dict(self) -> dict:
        return {
            "author_id": self.author_id,
            "color_index": self.color_index,
            "created_at": self.created_at,
            "points": [p.to_list() for p in self.points],
            "role": self.role.value,
            "stroke_id": self.stroke_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Stroke":
        if not isinstance(data, dict):
            raise MalformedDocument(f"stroke must be an object, got {type(data).__name__}")
        extra = set(data) - {"author_id", "color_index", "created_at", "points", "role", "stroke_id"}
        if extra:
            raise MalformedDocument(f"unknown stroke fields: {sorted(extra)}")
        try:
            stroke = cls(
                stroke_id=data["stroke_id"],
                author_id=data["author_id"],
                role=Role(data["role"]),
                points=tuple(Point3.from_list(p) for p in data["points"]),
                created_at=_require_int(data["created_at"], "created_at"),
                color_index=_require_int(data["color_index"], "color_index"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad stroke payload: {exc}") from exc
        stroke.validate()
        return stroke


@dataclass(frozen=True)
class EditOp:
    """One edit in the document history.

    Exactly the fields required by ``kind`` are set; ``seq`` is assigned by
    the session server on acknowledgement and stays None for local drafts.
    """

    op_id: str
    author_id: str
    kind: OpKind
    stroke: Optional[Stroke] = None
    stroke_id: Optional[str] = None
    rotation: Optional[Quaternion] = None
    translation: Optional[Point3] = None
    uniform_scale: Optional[float] = None
    role: Optional[Role] = None
    scale: Optional[float] = None
    seq: Optional[int] = None

    def validate(self) -> None:
        if not self.op_id or not isinstance(self.op_id, str):
            raise MalformedOp("op_id must be a non-empty string")
        k = self.kind
        if k == OpKind.ADD_STROKE:
            if self.stroke is None:
                raise MalformedOp("add_stroke requires a stroke")
            self.stroke.validate()
        elif k == OpKind.DELETE_STROKE:
            if not self.stroke_id:
                raise MalformedOp("delete_stroke requires stroke_id")
        elif k == OpKind.TRANSFORM_STROKE:
            if not self.stroke_id:
                raise MalformedOp("transform_stroke requires stroke_id")
            if self.rotation is None or self.translation is None or self.uniform_scale is None:
                raise MalformedOp("transform_stroke requires rotation, translation, uniform_scale")
            self.rotation.check_unit()
            if not self.translation.is_finite():
                raise NonFiniteCoordinate("non-finite translation")
            if not math.isfinite(self.uniform_scale) or self.uniform_scale <= 0.0:
                raise NonPositiveScale(f"uniform_scale must be > 0, got {self.uniform_scale!r}")
        elif k == OpKind.SET_ROLE:
            if not self.stroke_id or self.role is None:
                raise MalformedOp("set_role requires stroke_id and role")
        elif k == OpKind.SET_CALIBRATION:
            if self.scale is None or not math.isfinite(self.scale) or self.scale <= 0.0:
                raise NonPositiveScale(f"calibration scale must be > 0, got {self.scale!r}")

    def to_dict(self) -> dict:
        out: dict = {"author_id": self.author_id, "kind": self.kind.value, "op_id": self.op_id}
        if self.kind == OpKind.ADD_STROKE:
            out["stroke"] = self.stroke.to_dict()
        elif self.kind == OpKind.DELETE_STROKE:
            out["stroke_id"] = self.stroke_id
        elif self.kind == OpKind.TRANSFORM_STROKE:
            out["stroke_id"] = self.stroke_id
            out["rotation"] = self.rotation.to_dict()
            out["translation"] = self.translation.to_list()
            out["uniform_scale"] = float(self.uniform_scale)
        elif self.kind == OpKind.SET_ROLE:
            out["stroke_id"] = self.stroke_id
            out["role"] = self.role.value
        elif self.kind == OpKind.SET_CALIBRATION:
            out["scale"] = float(self.scale)
        if self.seq is not None:
            out["seq"] = self.seq
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EditOp":
        if not isinstance(data, dict):
            raise MalformedDocument(f"op must be an object, got {type(data).__name__}")
        try:
            kind = OpKind(data["kind"])
        except (KeyError, ValueError) as exc:
            raise MalformedDocument(f"bad op kind: {data.get('kind')!r}") from exc
        allowed = {"author_id", "kind", "op_id", "seq"}
        allowed |= {
            OpKind.ADD_STROKE: {"stroke"},
            OpKind.DELETE_STROKE: {"stroke_id"},
            OpKind.TRANSFORM_STROKE: {"stroke_id", "rotation", "translation", "uniform_scale"},
            OpKind.SET_ROLE: {"stroke_id", "role"},
            OpKind.SET_CALIBRATION: {"scale"},
        }[kind]
        extra = set(data) - allowed
        if extra:
            raise MalformedDocument(f"unknown op fields for {kind.value}: {sorted(extra)}")
        seq = data.get("seq")
        if seq is not None:
            seq = _require_int(seq, "seq")
        try:
            op = cls(
                op_id=data["op_id"],
                author_id=data["author_id"],
                kind=kind,
                stroke=Stroke.from_dict(data["stroke"]) if kind == OpKind.ADD_STROKE else None,
                stroke_id=data.get("stroke_id"),
                rotation=Quaternion.from_dict(data["rotation"]) if kind == OpKind.TRANSFORM_STROKE else None,
                translation=Point3.from_list(data["translation"]) if kind == OpKind.TRANSFORM_STROKE else None,
                uniform_scale=float(data["uniform_scale"]) if kind == OpKind.TRANSFORM_STROKE else None,
                role=Role(data["role"]) if kind == OpKind.SET_ROLE else None,
                scale=float(data["scale"]) if kind == OpKind.SET_CALIBRATION else None,
                seq=seq,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad op payload: {exc}") from exc
        try:
            op.validate()
        except MalformedOp as exc:
            raise MalformedDocument(str(exc)) from exc
        return op


def add_stroke(stroke: Stroke, *, op_id: str | None = None) -> EditOp:
    return EditOp(op_id=op_id or uuid.uuid4().hex, author_id=stroke.author_id,
                  kind=OpKind.ADD_STROKE, stroke=stroke)


def delete_stroke(stroke_id: str, author_id: str, *, op_id: str | None = None) -> EditOp:
    return EditOp(op_id=op_id or uuid.uuid4().hex, author_id=author_id,
                  kind=OpKind.DELETE_STROKE, stroke_id=stroke_id)


def transform_stroke(stroke_id: str, author_id: str, rotation: Quaternion,
                     translation: Point3, uniform_scale: float,
                     *, op_id: str | None = None) -> EditOp:
    return EditOp(op_id=op_id or uuid.uuid4().hex, author_id=author_id,
                  kind=OpKind.TRANSFORM_STROKE, stroke_id=stroke_id,
                  rotation=rotation, translation=translation, uniform_scale=uniform_scale)


def set_role(stroke_id: str, author_id: str, role: Role, *, op_id: str | None = None) -> EditOp:
    return EditOp(op_id=op_id or uuid.uuid4().hex, author_id=author_id,
                  kind=OpKind.SET_ROLE, stroke_id=stroke_id, role=role)


def set_calibration(scale: float, author_id: str, *, op_id: str | None = None) -> EditOp:
    return EditOp(op_id=op_id or uuid.uuid4().hex, author_id=author_id,
                  kind=OpKind.SET_CALIBRATION, scale=scale)


@dataclass(frozen=True)
class SketchDocument:
    doc_id: str
    schema_version: int = SCHEMA_VERSION
    calibration_scale: float = 1.0
    strokes: dict[str, Stroke] = field(default_factory=dict)
    revision: int = 0
    op_log: tuple[EditOp, ...] = ()

    @classmethod
    def empty(cls, doc_id: str) -> "SketchDocument":
        return cls(doc_id=doc_id)

    def strokes_sorted(self) -> list[Stroke]:
        return [self.strokes[k] for k in sorted(self.strokes)]

    def to_dict(self) -> dict:
        return {
            "calibration_scale": float(self.calibration_scale),
            "doc_id": self.doc_id,
            "op_log": [op.to_dict() for op in self.op_log],
            "revision": self.revision,
            "schema_version": self.schema_version,
            "strokes": {s.stroke_id: s.to_dict() for s in self.strokes_sorted()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SketchDocument":
        if not isinstance(data, dict):
            raise MalformedDocument(f"document must be an object, got {type(data).__name__}")
        expected = {"calibration_scale", "doc_id", "op_log", "revision", "schema_version", "strokes"}
        if set(data) != expected:
            missing = expected - set(data)
            extra = set(data) - expected
            raise MalformedDocument(f"bad document keys (missing={sorted(missing)}, unknown={sorted(extra)})")
        version = _require_int(data["schema_version"], "schema_version")
        if version != SCHEMA_VERSION:
            raise MalformedDocument(f"unknown schema_version {version}")
        if not isinstance(data["doc_id"], str):
            raise MalformedDocument("doc_id must be a string")
        try:
            calibration = float(data["calibration_scale"])
        except (TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad calibration_scale: {data['calibration_scale']!r}") from exc
        if not math.isfinite(calibration) or calibration <= 0.0:
            raise MalformedDocument(f"calibration_scale must be > 0, got {calibration!r}")
        if not isinstance(data["strokes"], dict):
            raise MalformedDocument("strokes must be an object")
        strokes: dict[str, Stroke] = {}
        for key, raw in data["strokes"].items():
            stroke = Stroke.from_dict(raw)
            if stroke.stroke_id != key:
                raise MalformedDocument(f"stroke key {key!r} != stroke_id {stroke.stroke_id!r}")
            strokes[key] = stroke
        if not isinstance(data["op_log"], list):
            raise MalformedDocument("op_log must be an array")
        ops = tuple(EditOp.from_dict(raw) for raw in data["op_log"])
        revision = _require_int(data["revision"], "revision")
        if revision != len(ops):
            raise MalformedDocument(f"revision {revision} != op_log length {len(ops)}")
        return cls(
            doc_id=data["doc_id"],
            schema_version=version,
            calibration_scale=calibration,
            strokes=strokes,
            revision=revision,
            op_log=ops,
        )


def apply_op(doc: SketchDocument, op: EditOp) -> SketchDocument:
    """Apply one edit, returning a new document; the input is never mutated."""
    op.validate()
    strokes = dict(doc.strokes)
    calibration = doc.calibration_scale

    if op.kind == OpKind.ADD_STROKE:
        if op.stroke.stroke_id in strokes:
            raise DuplicateStrokeId(f"stroke {op.stroke.stroke_id!r} already exists")
        strokes[op.stroke.stroke_id] = op.stroke
    elif op.kind == OpKind.DELETE_STROKE:
        if op.stroke_id not in strokes:
            raise UnknownStroke(f"no stroke {op.stroke_id!r}")
        del strokes[op.stroke_id]
    elif op.kind == OpKind.TRANSFORM_STROKE:
        if op.stroke_id not in strokes:
            raise UnknownStroke(f"no stroke {op.stroke_id!r}")
        old = strokes[op.stroke_id]
        moved = tuple(
            op.rotation.rotate(p.scaled(op.uniform_scale)) + op.translation
            for p in old.points
        )
        for p in moved:
            if not p.is_finite():
                raise NonFiniteCoordinate(f"transform of {op.stroke_id!r} produced non-finite point")
        strokes[op.stroke_id] = replace(old, points=moved)
    elif op.kind == OpKind.SET_ROLE:
        if op.stroke_id not in strokes:
            raise UnknownStroke(f"no stroke {op.stroke_id!r}")
        strokes[op.stroke_id] = replace(strokes[op.stroke_id], role=op.role)
    elif op.kind == OpKind.SET_CALIBRATION:
        calibration = float(op.scale)

    return replace(
        doc,
        strokes=strokes,
        calibration_scale=calibration,
        revision=doc.revision + 1,
        op_log=doc.op_log + (op,),
    )


def replay(doc: SketchDocument) -> SketchDocument:
    """Re-apply doc.op_log to an empty document (for tamper/consistency checks)."""
    out = SketchDocument.empty(doc.doc_id)
    for op in doc.op_log:
        out = apply_op(out, op)
    return out


def resample_stroke(stroke: Stroke, spacing: float) -> list[Point3]:
    """Resample the polyline at uniform arc-length intervals.

    Sample count is floor(length/spacing) + 1 with a minimum of 2; the first
    and last samples are the original endpoints, exactly.
    """
    return resample_polyline([p for p in stroke.points], spacing)


def resample_polyline(points: list[Point3], spacing: float) -> list[Point3]:
    if not math.isfinite(spacing) or spacing <= 0.0:
        raise NonPositiveSpacing(f"spacing must be > 0, got {spacing!r}")
    pts = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = float(cum[-1])
    count = max(2, int(total / spacing) + 1)
    targets = np.linspace(0.0, total, count)
    resampled = np.empty((count, 3), dtype=np.float64)
    for axis in range(3):
        resampled[:, axis] = np.interp(targets, cum, pts[:, axis])
    out = [Point3(*row) for row in resampled]
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def canonical_serialize(doc: SketchDocument) -> bytes:
    return canonical_dumps(doc.to_dict())


def parse(data: bytes | str) -> SketchDocument:
    try:
        obj = canonical_loads(data)
    except ValueError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    return SketchDocument.from_dict(obj)


def document_digest(doc: SketchDocument) -> str:
    return hashlib.sha256(canonical_serialize(doc)).hexdigest()


def calibrate(measured_length: float, actual_length: float, *,
              author_id: str = "", op_id: str | None = None) -> EditOp:
    """Build a calibration op from a reference measurement against a real object."""
    for name, value in (("measured_length", measured_length), ("actual_length", actual_length)):
        if not math.isfinite(value) or value <= 0.0:
            raise NonPositiveLength(f"{name} must be > 0, got {value!r}")
    return set_calibration(actual_length / measured_length, author_id, op_id=op_id)
