"""Small 3D primitives: points and unit quaternions.

World frame is right-handed with Y up; all lengths are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import MalformedOp, NonFiniteCoordinate

QUAT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)

    def to_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.z)]

    @classmethod
    def from_list(cls, data: Iterable[float]) -> "Point3":
        vals = list(data)
        if len(vals) != 3:
            raise NonFiniteCoordinate(f"point needs 3 coordinates, got {len(vals)}")
        p = cls(float(vals[0]), float(vals[1]), float(vals[2]))
        if not p.is_finite():
            raise NonFiniteCoordinate(f"non-finite point {vals}")
        return p

    def __add__(self, other: "Point3") -> "Point3":
        return Point3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Point3") -> "Point3":
        return Point3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, s: float) -> "Point3":
        return Point3(self.x * s, self.y * s, self.z * s)

    def distance_to(self, other: "Point3") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class Quaternion:
    """Rotation quaternion, stored (w, x, y, z); must be unit length."""

    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis: tuple[float, float, float], angle: float) -> "Quaternion":
        ax, ay, az = axis
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n == 0.0:
            raise MalformedOp("zero-length rotation axis")
        s = math.sin(angle / 2.0) / n
        return cls(math.cos(angle / 2.0), ax * s, ay * s, az * s)

    def norm(self) -> float:
        return math.sqrt(self.w ** 2 + self.x ** 2 + self.y ** 2 + self.z ** 2)

    def check_unit(self) -> None:
        if not all(math.isfinite(v) for v in (self.w, self.x, self.y, self.z)):
            raise MalformedOp("non-finite quaternion")
        if abs(self.norm() - 1.0) > QUAT_NORM_TOL:
            raise MalformedOp(f"quaternion not normalized: |q|={self.norm()!r}")

    def rotate(self, p: Point3) -> Point3:
        # q p q* expanded; cheaper than building the matrix for single points.
        w, x, y, z = self.w, self.x, self.y, self.z
        tx = 2.0 * (y * p.z - z * p.y)
        ty = 2.0 * (z * p.x - x * p.z)
        tz = 2.0 * (x * p.y - y * p.x)
        return Point3(
            p.x + w * tx + (y * tz - z * ty),
            p.y + w * ty + (z * tx - x * tz),
            p.z + w * tz + (x * ty - y * tx),
        )

    def to_dict(self) -> dict[str, float]:
        return {"w": float(self.w), "x": float(self.x), "y": float(self.y), "z": float(self.z)}

    @classmethod
    def from_dict(cls, data: dict) -> "Quaternion":
        try:
            q = cls(float(data["w"]), float(data["x"]), float(data["y"]), float(data["z"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedOp(f"bad quaternion payload: {data!r}") from exc
        q.check_unit()
        return q


def polyline_length(points: list[Point3]) -> float:
    return sum(points[i].distance_to(points[i + 1]) for i in range(len(points) - 1))
