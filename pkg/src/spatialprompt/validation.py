"""Measures how well a generated mesh satisfies a compiled constraint set.

Hard checks (containment, proportion, scaffold proximity for retained
components) gate overall_pass; soft checks (guide scaffolds, spatial
relations) only feed the score. Default tolerances are engine-defined and
overridable per call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


import numpy as np
from scipy.spatial import cKDTree

from .compiler import (
    ABOVE_FOOTPRINT_OVERLAP,
    ABOVE_GAP_TOL,
    ADJACENT_DISTANCE,
    CONTAINS_FRACTION,
    ConstraintSet,
    Hardness,
    OrientedBox,
    RelationKind,
    SpatialRelation,
)
from .errors import DegenerateMesh, EmptyMesh, MalformedConstraintSet
from .jsoncanon import canonical_dumps, canonical_loads
from .meshio import TriangleMesh

CONTAINMENT_MIN_FRACTION = 0.99
CONTAINMENT_INFLATION_DIAGONAL = 0.05  # added to each half extent, x box diagonal
PROPORTION_REL_TOL = 0.15
PROXIMITY_MIN_TOL = 0.01               # meters
PROXIMITY_DIAGONAL_FACTOR = 0.05       # x global box diagonal
RELATION_BOX_INFLATE = 1.5             # vertex-to-component assignment
SCAFFOLD_P95 = 95.0


@dataclass(frozen=True)
class Tolerances:
    containment_fraction: float = CONTAINMENT_MIN_FRACTION
    proportion_rel: float = PROPORTION_REL_TOL
    proximity_min: float = PROXIMITY_MIN_TOL
    proximity_diagonal_factor: float = PROXIMITY_DIAGONAL_FACTOR


@dataclass(frozen=True)
class CheckResult:
    name: str
    kind: str        # "hard" | "soft"
    target: str
    measured: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "measured": float(self.measured),
            "name": self.name,
            "pass": self.passed,
            "target": self.target,
            "tolerance": float(self.tolerance),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CheckResult":
        try:
            return cls(
                name=data["name"],
                kind=data["kind"],
                target=data["target"],
                measured=float(data["measured"]),
                tolerance=float(data["tolerance"]),
                passed=bool(data["pass"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedConstraintSet(f"bad check payload: {exc}") from exc


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]
    score: float
    overall_pass: bool

    def to_dict(self) -> dict:
        return {
            "checks": [c.to_dict() for c in self.checks],
            "overall_pass": self.overall_pass,
            "score": float(self.score),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValidationReport":
        return cls(
            checks=tuple(CheckResult.from_dict(c) for c in data["checks"]),
            score=float(data["score"]),
            overall_pass=bool(data["overall_pass"]),
        )


def serialize_report(report: ValidationReport) -> bytes:
    return canonical_dumps(report.to_dict())


def parse_report(data: bytes | str) -> ValidationReport:
    return ValidationReport.from_dict(canonical_loads(data))


# --- distance kernels ---

def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points (k,3) to segments a->b (k,3): paired rows."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.zeros(len(points))
    ok = denom > 0
    t[ok] = np.einsum("ij,ij->i", points[ok] - a[ok], ab[ok]) / denom[ok]
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def _pairwise_point_triangle(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Exact distances for paired rows: points (k,3) vs triangles tri (k,3,3).

    Closest point is either interior (perpendicular foot inside) or on one of
    the three boundary segments; degenerate triangles fall back to segments.
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    d = np.minimum(
        _segment_distances(points, a, b),
        np.minimum(_segment_distances(points, b, c), _segment_distances(points, c, a)),
    )
    ab = b - a
    ac = c - a
    n = np.cross(ab, ac)
    n2 = np.einsum("ij,ij->i", n, n)
    ok = n2 > 1e-30
    if np.any(ok):
        ap = points[ok] - a[ok]
        nk = n[ok]
        dist_plane = np.einsum("ij,ij->i", ap, nk) / np.sqrt(n2[ok])
        # barycentric test of the perpendicular foot
        foot = points[ok] - dist_plane[:, None] * (nk / np.sqrt(n2[ok])[:, None])
        v0 = ac[ok]
        v1 = ab[ok]
        v2 = foot - a[ok]
        dot00 = np.einsum("ij,ij->i", v0, v0)
        dot01 = np.einsum("ij,ij->i", v0, v1)
        dot02 = np.einsum("ij,ij->i", v0, v2)
        dot11 = np.einsum("ij,ij->i", v1, v1)
        dot12 = np.einsum("ij,ij->i", v1, v2)
        denom = dot00 * dot11 - dot01 * dot01
        good = denom > 1e-30
        u = np.zeros_like(denom)
        v = np.zeros_like(denom)
        u[good] = (dot11[good] * dot02[good] - dot01[good] * dot12[good]) / denom[good]
        v[good] = (dot00[good] * dot12[good] - dot01[good] * dot02[good]) / denom[good]
        inside = good & (u >= 0) & (v >= 0) & (u + v <= 1)
        plane = np.abs(dist_plane)
        sub = d[ok]
        sub[inside] = np.minimum(sub[inside], plane[inside])
        d[ok] = sub
    return d


def point_triangle_distance(point, triangle) -> float:
    """Exact Euclidean distance from a point to a closed triangle."""
    p = np.asarray([point.x, point.y, point.z] if hasattr(point, "x") else point,
                   dtype=np.float64).reshape(1, 3)
    tri = np.asarray([[v.x, v.y, v.z] if hasattr(v, "x") else v for v in triangle],
                     dtype=np.float64).reshape(1, 3, 3)
    return float(_pairwise_point_triangle(p, tri)[0])


class MeshDistanceIndex:
    """Reusable exact point-to-mesh distance queries.

    The nearest mesh vertex bounds the true distance from above, so only
    triangles whose centroid can possibly beat that bound get the exact
    kernel; candidates for a whole batch are evaluated in one flat call.
    """

    def __init__(self, mesh: TriangleMesh):
        if mesh.triangle_count == 0:
            raise EmptyMesh("mesh has no triangles")
        self.tri = mesh.vertices[mesh.triangles]  # (m, 3, 3)
        # the upper bound is only sound over vertices that triangles reference
        used = mesh.vertices[np.unique(mesh.triangles)]
        self._vertex_tree = cKDTree(used)
        centroids = self.tri.mean(axis=1)
        self._tri_radius = float(np.linalg.norm(
            self.tri - centroids[:, None, :], axis=2).max())
        self._centroid_tree = cKDTree(centroids)

    def query(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        upper = self._vertex_tree.query(points)[0]
        lists = self._centroid_tree.query_ball_point(
            points, upper + self._tri_radius + 1e-9)
        # a pruned-out point would contradict the vertex upper bound, but be
        # safe and fall back to the overall nearest centroid
        counts = np.array([len(lst) for lst in lists])
        if np.any(counts == 0):
            for i in np.nonzero(counts == 0)[0]:
                lists[i] = [int(self._centroid_tree.query(points[i])[1])]
            counts = np.array([len(lst) for lst in lists])
        flat_idx = np.concatenate([np.asarray(lst, dtype=np.int64) for lst in lists])
        flat_pts = np.repeat(points, counts, axis=0)
        d = _pairwise_point_triangle(flat_pts, self.tri[flat_idx])
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        return np.minimum.reduceat(d, offsets)


def min_distances_to_mesh(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact distance from each point to the nearest mesh triangle."""
    return MeshDistanceIndex(mesh).query(points)


# --- checks ---

def containment_check(mesh: TriangleMesh, global_box: OrientedBox) -> float:
    """Fraction of mesh vertices inside the global box with each half extent
    grown by 5% of the box diagonal."""
    if mesh.vertex_count == 0:
        raise EmptyMesh("mesh has no vertices")
    pad = CONTAINMENT_INFLATION_DIAGONAL * global_box.diagonal()
    local = np.abs((mesh.vertices - global_box.center_array()) @ global_box.axes_array().T)
    bounds = np.array(global_box.half_extents) + pad + 1e-12
    inside = np.all(local <= bounds, axis=1)
    return float(np.count_nonzero(inside)) / mesh.vertex_count


def proportion_check(mesh: TriangleMesh, cs: ConstraintSet) -> tuple[float, float, float]:
    """Mesh extents along the global box axes, sorted descending, normalized
    by the largest."""
    if mesh.vertex_count == 0:
        raise EmptyMesh("mesh has no vertices")
    box = cs.global_box
    local = (mesh.vertices - box.center_array()) @ box.axes_array().T
    extents = np.sort(local.max(axis=0) - local.min(axis=0))[::-1]
    if extents[0] <= 0.0:
        raise DegenerateMesh("mesh has zero extent along every axis")
    m = extents / extents[0]
    return (float(m[0]), float(m[1]), float(m[2]))


def scaffold_proximity(mesh: TriangleMesh, cs: ConstraintSet) -> dict[str, float]:
    """p95 distance from each stroke's resampled samples to the mesh."""
    mesh.validate()
    index = MeshDistanceIndex(mesh)
    out: dict[str, float] = {}
    for edge in sorted(cs.scaffold.edges, key=lambda e: e.stroke_id):
        samples = np.array([p.to_list() for p in edge.polyline], dtype=np.float64)
        dists = index.query(samples)
        out[edge.stroke_id] = float(np.percentile(dists, SCAFFOLD_P95))
    return out


def proximity_tolerance(cs: ConstraintSet, tol: Tolerances = Tolerances()) -> float:
    return max(tol.proximity_min, tol.proximity_diagonal_factor * cs.global_box.diagonal())


def _assign_vertices(mesh: TriangleMesh, cs: ConstraintSet) -> dict[int, np.ndarray]:
    """Assign each vertex to a component: containing inflated box, ties and
    misses resolved by the nearest box center."""
    comps = cs.components
    centers = np.array([c.box.center for c in comps])
    inside = np.stack([c.box.contains(mesh.vertices, inflate=RELATION_BOX_INFLATE)
                       for c in comps], axis=1)  # (n, k)
    dist_to_center = np.linalg.norm(mesh.vertices[:, None, :] - centers[None, :, :], axis=2)
    counts = inside.sum(axis=1)
    choice = np.argmin(np.where(inside, dist_to_center, np.inf), axis=1)
    nearest = np.argmin(dist_to_center, axis=1)
    choice = np.where(counts == 0, nearest, choice)
    return {comp.component_id: mesh.vertices[choice == i]
            for i, comp in enumerate(comps)}


def _vertex_footprint(verts: np.ndarray) -> tuple[float, float, float, float]:
    return (float(verts[:, 0].min()), float(verts[:, 0].max()),
            float(verts[:, 2].min()), float(verts[:, 2].max()))


def _recheck_relation(rel: SpatialRelation, cs: ConstraintSet,
                      assigned: dict[int, np.ndarray]) -> tuple[bool, float]:
    sub = assigned[rel.subject]
    obj = assigned[rel.object]
    if len(sub) == 0 or len(obj) == 0:
        return False, math.inf
    if rel.kind == RelationKind.ABOVE:
        gap = float(sub[:, 1].min() - obj[:, 1].max())
        if gap < -ABOVE_GAP_TOL:
            return False, gap
        fp_s = _vertex_footprint(sub)
        fp_o = _vertex_footprint(obj)
        w = min(fp_s[1], fp_o[1]) - max(fp_s[0], fp_o[0])
        d = min(fp_s[3], fp_o[3]) - max(fp_s[2], fp_o[2])
        overlap = max(0.0, w) * max(0.0, d)
        area_s = (fp_s[1] - fp_s[0]) * (fp_s[3] - fp_s[2])
        area_o = (fp_o[1] - fp_o[0]) * (fp_o[3] - fp_o[2])
        smaller = min(area_s, area_o)
        return (smaller > 0 and overlap >= ABOVE_FOOTPRINT_OVERLAP * smaller), gap
    if rel.kind == RelationKind.CONTAINS:
        box = cs.component_by_id(rel.subject).box
        frac = float(np.count_nonzero(box.contains(obj))) / len(obj)
        return frac >= CONTAINS_FRACTION, frac
    dist = float(cKDTree(sub).query(obj, k=1)[0].min())
    if dist > ADJACENT_DISTANCE:
        return False, dist
    box_s = cs.component_by_id(rel.subject).box
    box_o = cs.component_by_id(rel.object).box
    frac_so = float(np.count_nonzero(box_s.contains(obj))) / len(obj)
    frac_os = float(np.count_nonzero(box_o.contains(sub))) / len(sub)
    return frac_so < CONTAINS_FRACTION and frac_os < CONTAINS_FRACTION, dist


def relation_check(mesh: TriangleMesh, cs: ConstraintSet) -> list[tuple[SpatialRelation, bool, float]]:
    """Soft-recheck each compiled relation on the vertex sets assigned to the
    components; a relation passes when it reappears."""
    if not cs.relations:
        return []
    assigned = _assign_vertices(mesh, cs)
    out = []
    for rel in cs.relations:
        ok, measured = _recheck_relation(rel, cs, assigned)
        out.append((rel, ok, measured))
    return out


def validate(mesh: TriangleMesh, cs: ConstraintSet,
             tolerances: Tolerances = Tolerances()) -> ValidationReport:
    """Run every check and fold the results into a deterministic report."""
    mesh.validate()
    checks: list[CheckResult] = []

    fraction = containment_check(mesh, cs.global_box)
    checks.append(CheckResult(
        name="containment",
        kind="hard",
        target="fraction of vertices inside the inflated global box",
        measured=fraction,
        tolerance=tolerances.containment_fraction,
        passed=fraction >= tolerances.containment_fraction,
    ))

    target_aspect = np.array([h / cs.global_box.half_extents[0]
                              for h in cs.global_box.half_extents])
    measured_aspect = np.array(proportion_check(mesh, cs))
    rel_err = float(np.max(np.abs(measured_aspect - target_aspect) / target_aspect))
    checks.append(CheckResult(
        name="proportion",
        kind="hard",
        target=("aspect %.3f:%.3f:%.3f (measured %.3f:%.3f:%.3f)"
                % (*target_aspect, *measured_aspect)),
        measured=rel_err,
        tolerance=tolerances.proportion_rel,
        passed=rel_err <= tolerances.proportion_rel,
    ))

    prox_tol = proximity_tolerance(cs, tolerances)
    p95 = scaffold_proximity(mesh, cs)
    for stroke_id in sorted(p95):
        hardness = cs.component_of_stroke(stroke_id).hardness
        checks.append(CheckResult(
            name=f"scaffold:{stroke_id}",
            kind="hard" if hardness == Hardness.RETAIN else "soft",
            target="p95 distance from stroke samples to the mesh",
            measured=p95[stroke_id],
            tolerance=prox_tol,
            passed=p95[stroke_id] <= prox_tol,
        ))

    for rel, ok, measured in relation_check(mesh, cs):
        thresholds = {RelationKind.ABOVE: ABOVE_GAP_TOL,
                      RelationKind.CONTAINS: CONTAINS_FRACTION,
                      RelationKind.ADJACENT: ADJACENT_DISTANCE}
        checks.append(CheckResult(
            name=f"relation:{rel.kind.value}:{rel.subject}:{rel.object}",
            kind="soft",
            target=f"component {rel.subject} {rel.kind.value} component {rel.object} reappears",
            measured=measured if math.isfinite(measured) else -1.0,
            tolerance=thresholds[rel.kind],
            passed=ok,
        ))

    passing = sum(1 for c in checks if c.passed)
    return ValidationReport(
        checks=tuple(checks),
        score=passing / len(checks),
        overall_pass=all(c.passed for c in checks if c.kind == "hard"),
    )
