"""Triangle meshes and the OBJ subset used for generated assets.

Supported OBJ input: `v x y z` and `f a b c ...` (1-based, polygons
fan-triangulated from the first index). Comment/attribute lines (#, vn, vt,
o, g, s, usemtl, mtllib) are ignored. Negative indices are rejected.
Export writes vertices then faces with shortest round-trip decimals and \\n
line endings, so export is byte-deterministic and load(export(m)) is
geometry-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh, MalformedObj

_IGNORED_PREFIXES = ("#", "vn", "vt", "o", "g", "s", "usemtl", "mtllib")


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int64, indices into vertices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def validate(self, *, require_triangles: bool = True) -> None:
        if not np.all(np.isfinite(self.vertices)):
            raise MalformedObj("mesh has non-finite vertex coordinates")
        if require_triangles and self.triangle_count == 0:
            raise EmptyMesh("mesh has no triangles")
        if self.triangle_count:
            if self.triangles.min() < 0 or self.triangles.max() >= self.vertex_count:
                raise MalformedObj("triangle index out of range")

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64),
                            self.triangles.copy())

    def transformed(self, matrix: np.ndarray, offset=None) -> "TriangleMesh":
        verts = self.vertices @ np.asarray(matrix, dtype=np.float64).T
        if offset is not None:
            verts = verts + np.asarray(offset, dtype=np.float64)
        return TriangleMesh(verts, self.triangles.copy())

    def geometry_equal(self, other: "TriangleMesh", tol: float = 0.0) -> bool:
        if self.vertices.shape != other.vertices.shape:
            return False
        if self.triangles.shape != other.triangles.shape:
            return False
        if tol == 0.0:
            return bool(np.array_equal(self.vertices, other.vertices)
                        and np.array_equal(self.triangles, other.triangles))
        return bool(np.all(np.abs(self.vertices - other.vertices) <= tol)
                    and np.array_equal(self.triangles, other.triangles))


def _parse_face_index(token: str, line_no: int) -> int:
    # tolerate v/vt/vn tokens by taking the position index
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError as exc:
        raise MalformedObj(f"line {line_no}: bad face index {token!r}") from exc
    if idx < 0:
        raise MalformedObj(f"line {line_no}: negative indices unsupported ({token!r})")
    if idx == 0:
        raise MalformedObj(f"line {line_no}: face indices are 1-based ({token!r})")
    return idx - 1


def load_mesh_obj(data: bytes | str) -> TriangleMesh:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedObj(f"not UTF-8: {exc}") from exc
    vertices: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    for line_no, raw in enumerate(data.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) != 4:
                raise MalformedObj(f"line {line_no}: vertex needs exactly 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise MalformedObj(f"line {line_no}: non-numeric coordinate") from exc
            if not all(np.isfinite(vertices[-1])):
                raise MalformedObj(f"line {line_no}: non-finite coordinate")
        elif tag == "f":
            idxs = [_parse_face_index(tok, line_no) for tok in parts[1:]]
            if len(idxs) < 3:
                raise MalformedObj(f"line {line_no}: face arity < 3")
            for k in range(1, len(idxs) - 1):  # fan triangulation
                triangles.append((idxs[0], idxs[k], idxs[k + 1]))
        elif tag in _IGNORED_PREFIXES or tag.startswith("#"):
            continue
        else:
            raise MalformedObj(f"line {line_no}: unsupported directive {tag!r}")
    mesh = TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                        np.array(triangles, dtype=np.int64).reshape(-1, 3))
    for tri in mesh.triangles.flat:
        if tri >= mesh.vertex_count:
            raise MalformedObj(f"face index {int(tri) + 1} exceeds {mesh.vertex_count} vertices")
    mesh.validate(require_triangles=False)
    return mesh


def _fmt(value: float) -> str:
    return repr(float(value))


def export_mesh_obj(mesh: TriangleMesh) -> bytes:
    mesh.validate(require_triangles=False)
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
