"""Compile a sketch document into an executable spatial constraint set.

The pipeline: apply the calibration scale, resample strokes, merge nearby
stroke endpoints into junctions, split the sketch into connected components,
fit an oriented bounding box per component and globally, derive proportions
and pairwise spatial relations, and assign per-component hardness (retain vs
guide). All of it is a pure, deterministic function of (document, parameters).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    EmptyPointSet,
    EmptySketch,
    MalformedConstraintSet,
    NonFinitePoint,
    NonPositiveEpsilon,
    NonPositiveSpacing,
)
from .geometry import Point3
from .jsoncanon import canonical_dumps, canonical_loads
from .sketch import Role, SketchDocument, document_digest, resample_polyline

DEFAULT_RESAMPLE_SPACING = 0.01   # meters between scaffold samples
MIN_EPSILON = 0.01                # junction merge floor, meters
EPSILON_SPACING_FACTOR = 1.5      # default epsilon = this x median raw sample gap

BOX_PADDING = 1.02                # half-extent padding factor
HALF_EXTENT_FLOOR = 0.001         # meters; avoids zero-volume boxes
EIGENVALUE_TIE_REL = 1e-9         # relative tie threshold triggering world axes

ABOVE_GAP_TOL = 0.02              # meters of allowed vertical overlap for "above"
ABOVE_FOOTPRINT_OVERLAP = 0.25    # fraction of the smaller XZ footprint
CONTAINS_FRACTION = 0.95          # fraction of samples inside the other's box
ADJACENT_DISTANCE = 0.02          # meters between nearest samples


class Hardness(str, Enum):
    RETAIN = "retain"
    GUIDE = "guide"


class RelationKind(str, Enum):
    ABOVE = "above"
    CONTAINS = "contains"
    ADJACENT = "adjacent"


_RELATION_ORDER = {RelationKind.ABOVE: 0, RelationKind.CONTAINS: 1, RelationKind.ADJACENT: 2}


@dataclass(frozen=True)
class OrientedBox:
    """Right-handed oriented box; axes rows are orthonormal, half extents
    sorted descending and floored at 1 mm."""

    center: tuple[float, float, float]
    axes: tuple[tuple[float, float, float], ...]
    half_extents: tuple[float, float, float]

    def axes_array(self) -> np.ndarray:
        return np.array(self.axes, dtype=np.float64)

    def center_array(self) -> np.ndarray:
        return np.array(self.center, dtype=np.float64)

    def extents(self) -> tuple[float, float, float]:
        return tuple(2.0 * h for h in self.half_extents)

    def volume(self) -> float:
        return 8.0 * self.half_extents[0] * self.half_extents[1] * self.half_extents[2]

    def diagonal(self) -> float:
        return 2.0 * math.sqrt(sum(h * h for h in self.half_extents))

    def corners(self) -> np.ndarray:
        axes = self.axes_array()
        he = np.array(self.half_extents)
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=np.float64)
        return self.center_array() + (signs * he) @ axes

    def contains(self, points: np.ndarray, inflate: float = 1.0, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of points inside the box, half extents scaled by inflate."""
        local = np.abs((np.atleast_2d(points) - self.center_array()) @ self.axes_array().T)
        bounds = np.array(self.half_extents) * inflate + tol
        return np.all(local <= bounds, axis=1)

    def validate(self) -> None:
        axes = self.axes_array()
        if axes.shape != (3, 3) or not np.all(np.isfinite(axes)):
            raise MalformedConstraintSet("box axes must be a finite 3x3 matrix")
        if np.max(np.abs(axes @ axes.T - np.eye(3))) > 1e-6:
            raise MalformedConstraintSet("box axes not orthonormal")
        if np.linalg.det(axes) < 0.0:
            raise MalformedConstraintSet("box axes not right-handed")
        he = self.half_extents
        if len(he) != 3 or not all(math.isfinite(h) for h in he):
            raise MalformedConstraintSet("box needs 3 finite half extents")
        if any(h < HALF_EXTENT_FLOOR - 1e-12 for h in he):
            raise MalformedConstraintSet(f"half extents below {HALF_EXTENT_FLOOR} m floor: {he}")
        if not (he[0] >= he[1] >= he[2]):
            raise MalformedConstraintSet(f"half extents not sorted descending: {he}")
        if not all(math.isfinite(c) for c in self.center):
            raise MalformedConstraintSet("box center not finite")

    def to_dict(self) -> dict:
        return {
            "axes": [list(map(float, a)) for a in self.axes],
            "center": list(map(float, self.center)),
            "half_extents": list(map(float, self.half_extents)),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OrientedBox":
        try:
            box = cls(
                center=tuple(float(v) for v in data["center"]),
                axes=tuple(tuple(float(v) for v in row) for row in data["axes"]),
                half_extents=tuple(float(v) for v in data["half_extents"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedConstraintSet(f"bad box payload: {exc}") from exc
        box.validate()
        return box


@dataclass(frozen=True)
class GraphEdge:
    stroke_id: str
    node_a: int
    node_b: int
    polyline: tuple[Point3, ...]  # resampled, calibrated


@dataclass(frozen=True)
class JunctionGraph:
    nodes: tuple[Point3, ...]
    edges: tuple[GraphEdge, ...]

    def to_dict(self) -> dict:
        return {
            "edges": [
                {
                    "node_a": e.node_a,
                    "node_b": e.node_b,
                    "polyline": [p.to_list() for p in e.polyline],
                    "stroke_id": e.stroke_id,
                }
                for e in self.edges
            ],
            "nodes": [p.to_list() for p in self.nodes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JunctionGraph":
        try:
            nodes = tuple(Point3.from_list(p) for p in data["nodes"])
            edges = tuple(
                GraphEdge(
                    stroke_id=e["stroke_id"],
                    node_a=int(e["node_a"]),
                    node_b=int(e["node_b"]),
                    polyline=tuple(Point3.from_list(p) for p in e["polyline"]),
                )
                for e in data["edges"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedConstraintSet(f"bad scaffold payload: {exc}") from exc
        graph = cls(nodes=nodes, edges=edges)
        for e in edges:
            if not (0 <= e.node_a < len(nodes)) or not (0 <= e.node_b < len(nodes)):
                raise MalformedConstraintSet(f"edge {e.stroke_id!r} references missing node")
            if len(e.polyline) < 2:
                raise MalformedConstraintSet(f"edge {e.stroke_id!r} polyline too short")
        seen = [e.stroke_id for e in edges]
        if len(seen) != len(set(seen)):
            raise MalformedConstraintSet("duplicate stroke edges in scaffold")
        return graph


@dataclass(frozen=True)
class Component:
    component_id: int
    stroke_ids: tuple[str, ...]
    box: OrientedBox
    extents_sorted: tuple[float, float, float]
    hardness: Hardness

    def to_dict(self) -> dict:
        return {
            "box": self.box.to_dict(),
            "component_id": self.component_id,
            "extents_sorted": list(map(float, self.extents_sorted)),
            "hardness": self.hardness.value,
            "stroke_ids": list(self.stroke_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Component":
        try:
            comp = cls(
                component_id=int(data["component_id"]),
                stroke_ids=tuple(data["stroke_ids"]),
                box=OrientedBox.from_dict(data["box"]),
                extents_sorted=tuple(float(v) for v in data["extents_sorted"]),
                hardness=Hardness(data["hardness"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedConstraintSet(f"bad component payload: {exc}") from exc
        if not comp.stroke_ids:
            raise MalformedConstraintSet(f"component {comp.component_id} has no strokes")
        expected = tuple(2.0 * h for h in comp.box.half_extents)
        if any(abs(a - b) > 1e-9 for a, b in zip(comp.extents_sorted, expected)):
            raise MalformedConstraintSet(
                f"component {comp.component_id} extents_sorted inconsistent with box")
        return comp


@dataclass(frozen=True)
class SpatialRelation:
    kind: RelationKind
    subject: int
    object: int
    measured: float

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "measured": float(self.measured),
            "object": self.object,
            "subject": self.subject,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpatialRelation":
        try:
            rel = cls(
                kind=RelationKind(data["kind"]),
                subject=int(data["subject"]),
                object=int(data["object"]),
                measured=float(data["measured"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedConstraintSet(f"bad relation payload: {exc}") from exc
        if rel.subject == rel.object:
            raise MalformedConstraintSet("relation subject == object")
        return rel


@dataclass(frozen=True)
class ComponentProportion:
    component_id: int
    scale_ratio: float           # component max extent / global max extent, clamped to 1
    aspect: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "aspect": list(map(float, self.aspect)),
            "component_id": self.component_id,
            "scale_ratio": float(self.scale_ratio),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ComponentProportion":
        try:
            prop = cls(
                component_id=int(data["component_id"]),
                scale_ratio=float(data["scale_ratio"]),
                aspect=tuple(float(v) for v in data["aspect"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedConstraintSet(f"bad proportion payload: {exc}") from exc
        if not (0.0 < prop.scale_ratio <= 1.0):
            raise MalformedConstraintSet(f"scale_ratio out of (0,1]: {prop.scale_ratio}")
        if len(prop.aspect) != 3 or any(not (0.0 < a <= 1.0) for a in prop.aspect):
            raise MalformedConstraintSet(f"aspect out of (0,1]: {prop.aspect}")
        return prop


@dataclass(frozen=True)
class ConstraintSet:
    source_digest: str
    source_revision: int
    global_box: OrientedBox
    components: tuple[Component, ...]
    relations: tuple[SpatialRelation, ...]
    scaffold: JunctionGraph
    proportions: tuple[ComponentProportion, ...]
    resample_spacing: float

    def component_by_id(self, component_id: int) -> Component:
        for comp in self.components:
            if comp.component_id == component_id:
                return comp
        raise KeyError(component_id)

    def component_of_stroke(self, stroke_id: str) -> Component:
        for comp in self.components:
            if stroke_id in comp.stroke_ids:
                return comp
        raise KeyError(stroke_id)

    def samples_by_component(self) -> dict[int, np.ndarray]:
        by_stroke = {e.stroke_id: e.polyline for e in self.scaffold.edges}
        out: dict[int, np.ndarray] = {}
        for comp in self.components:
            pts = [p.to_list() for sid in comp.stroke_ids for p in by_stroke[sid]]
            out[comp.component_id] = np.array(pts, dtype=np.float64)
        return out

    def to_dict(self) -> dict:
        return {
            "components": [c.to_dict() for c in self.components],
            "global_box": self.global_box.to_dict(),
            "proportions": [p.to_dict() for p in self.proportions],
            "relations": [r.to_dict() for r in self.relations],
            "resample_spacing": float(self.resample_spacing),
            "scaffold": self.scaffold.to_dict(),
            "source_digest": self.source_digest,
            "source_revision": self.source_revision,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConstraintSet":
        if not isinstance(data, dict):
            raise MalformedConstraintSet(f"constraint set must be an object, got {type(data).__name__}")
        expected = {"components", "global_box", "proportions", "relations",
                    "resample_spacing", "scaffold", "source_digest", "source_revision"}
        if set(data) != expected:
            raise MalformedConstraintSet(
                f"bad constraint keys (missing={sorted(expected - set(data))}, "
                f"unknown={sorted(set(data) - expected)})")
        digest = data["source_digest"]
        if not (isinstance(digest, str) and len(digest) == 64
                and all(c in "0123456789abcdef" for c in digest)):
            raise MalformedConstraintSet("source_digest must be 64 lowercase hex chars")
        revision = data["source_revision"]
        if isinstance(revision, bool) or not isinstance(revision, int) or revision < 0:
            raise MalformedConstraintSet(f"bad source_revision: {revision!r}")
        try:
            spacing = float(data["resample_spacing"])
        except (TypeError, ValueError) as exc:
            raise MalformedConstraintSet("bad resample_spacing") from exc
        if not math.isfinite(spacing) or spacing <= 0.0:
            raise MalformedConstraintSet(f"resample_spacing must be > 0: {spacing!r}")
        cs = cls(
            source_digest=digest,
            source_revision=revision,
            global_box=OrientedBox.from_dict(data["global_box"]),
            components=tuple(Component.from_dict(c) for c in data["components"]),
            relations=tuple(SpatialRelation.from_dict(r) for r in data["relations"]),
            scaffold=JunctionGraph.from_dict(data["scaffold"]),
            proportions=tuple(ComponentProportion.from_dict(p) for p in data["proportions"]),
            resample_spacing=spacing,
        )
        cs._validate_cross_references()
        return cs

    def _validate_cross_references(self) -> None:
        comp_ids = [c.component_id for c in self.components]
        if len(comp_ids) != len(set(comp_ids)):
            raise MalformedConstraintSet("duplicate component ids")
        comp_strokes: list[str] = []
        for c in self.components:
            comp_strokes.extend(c.stroke_ids)
        if len(comp_strokes) != len(set(comp_strokes)):
            raise MalformedConstraintSet("stroke assigned to more than one component")
        edge_strokes = {e.stroke_id for e in self.scaffold.edges}
        if set(comp_strokes) != edge_strokes:
            raise MalformedConstraintSet("components and scaffold disagree on stroke set")
        prop_ids = [p.component_id for p in self.proportions]
        if sorted(prop_ids) != sorted(comp_ids):
            raise MalformedConstraintSet("proportions do not cover components exactly")
        known = set(comp_ids)
        for r in self.relations:
            if r.subject not in known or r.object not in known:
                raise MalformedConstraintSet(f"relation references unknown component: {r}")


# --- oriented box fitting ---

def _as_point_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
    else:
        pts = np.array([[p.x, p.y, p.z] if isinstance(p, Point3) else list(p) for p in points],
                       dtype=np.float64)
    if pts.size == 0:
        raise EmptyPointSet("no points to fit")
    pts = pts.reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise NonFinitePoint("point set contains non-finite values")
    return pts


def _extents_along(pts: np.ndarray, axes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (center, half_extents) of the tight box spanned by pts along axes."""
    local = pts @ axes.T
    lo = local.min(axis=0)
    hi = local.max(axis=0)
    center = ((lo + hi) / 2.0) @ axes
    return center, (hi - lo) / 2.0


def _sign_fix(axis: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(axis)))
    return -axis if axis[i] < 0 else axis


def _principal_axes(pts: np.ndarray) -> Optional[np.ndarray]:
    """PCA axes (rows, descending eigenvalue), or None on an eigenvalue tie."""
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    eigenvalues = eigenvalues[::-1]
    eigenvectors = eigenvectors[:, ::-1]
    scale = max(abs(float(eigenvalues[0])), 1e-30)
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(float(eigenvalues[i] - eigenvalues[j])) < EIGENVALUE_TIE_REL * scale:
                return None
    axes = np.array([_sign_fix(eigenvectors[:, k]) for k in range(3)])
    axes[2] = np.cross(axes[0], axes[1])
    return axes


def fit_oriented_box(points) -> OrientedBox:
    """Fit an oriented bounding box: PCA axes unless eigenvalues tie (then
    world axes), keeping whichever of the PCA/world boxes is smaller, padded
    2% and floored at 1 mm per half extent. Contains every input point."""
    pts = _as_point_array(points)
    world = np.eye(3)
    w_center, w_he = _extents_along(pts, world)
    choice = (w_center, w_he, world)
    pca = _principal_axes(pts) if len(pts) > 1 else None
    if pca is not None:
        p_center, p_he = _extents_along(pts, pca)
        if np.prod(p_he) < np.prod(w_he):
            choice = (p_center, p_he, pca)
    center, he, axes = choice
    he = np.maximum(he * BOX_PADDING, HALF_EXTENT_FLOOR)
    order = np.argsort(-he, kind="stable")
    he = he[order]
    axes = axes[order]
    axes = np.array([_sign_fix(axes[0]), _sign_fix(axes[1]), np.zeros(3)])
    axes[2] = np.cross(axes[0], axes[1])
    return OrientedBox(
        center=tuple(float(v) for v in center),
        axes=tuple(tuple(float(v) for v in row) for row in axes),
        half_extents=tuple(float(v) for v in he),
    )


# --- junction graph ---

class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:  # path compression
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # attach larger index under smaller: keeps roots deterministic
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def build_junction_graph(doc: SketchDocument, epsilon: float,
                         resample_spacing: float = DEFAULT_RESAMPLE_SPACING) -> JunctionGraph:
    """Merge stroke endpoints within epsilon (transitively) into junction
    nodes; each stroke becomes one edge carrying its resampled polyline.

    Stroke coordinates are used as stored: apply calibration before calling.
    """
    if not math.isfinite(epsilon) or epsilon <= 0.0:
        raise NonPositiveEpsilon(f"epsilon must be > 0, got {epsilon!r}")
    strokes = doc.strokes_sorted()
    endpoints: list[Point3] = []
    for s in strokes:
        endpoints.append(s.points[0])
        endpoints.append(s.points[-1])
    ds = _DisjointSet(len(endpoints))
    coords = np.array([[p.x, p.y, p.z] for p in endpoints], dtype=np.float64) \
        if endpoints else np.zeros((0, 3))
    for i in range(len(endpoints)):
        d = np.linalg.norm(coords[i + 1:] - coords[i], axis=1)
        for off in np.nonzero(d <= epsilon)[0]:
            ds.union(i, i + 1 + int(off))

    node_of_root: dict[int, int] = {}
    members: list[list[int]] = []
    node_index = []
    for i in range(len(endpoints)):
        root = ds.find(i)
        if root not in node_of_root:
            node_of_root[root] = len(members)
            members.append([])
        members[node_of_root[root]].append(i)
        node_index.append(node_of_root[root])

    nodes = tuple(
        Point3(*coords[member].mean(axis=0)) for member in members
    )
    edges = []
    for k, s in enumerate(strokes):
        polyline = tuple(resample_polyline(list(s.points), resample_spacing))
        edges.append(GraphEdge(
            stroke_id=s.stroke_id,
            node_a=node_index[2 * k],
            node_b=node_index[2 * k + 1],
            polyline=polyline,
        ))
    return JunctionGraph(nodes=nodes, edges=tuple(edges))


def connected_components(graph: JunctionGraph) -> list[tuple[str, ...]]:
    """Partition stroke ids by junction-graph connectivity, ordered by each
    group's smallest stroke id."""
    if not graph.edges:
        return []
    ds = _DisjointSet(len(graph.nodes))
    for e in graph.edges:
        ds.union(e.node_a, e.node_b)
    groups: dict[int, list[str]] = {}
    for e in graph.edges:
        groups.setdefault(ds.find(e.node_a), []).append(e.stroke_id)
    ordered = sorted((sorted(ids) for ids in groups.values()), key=lambda ids: ids[0])
    return [tuple(ids) for ids in ordered]


# --- constraint derivation ---

def assign_hardness(roles: Iterable[Role]) -> Hardness:
    """Retain when any member stroke is a contour or anchor; guide otherwise."""
    roles = list(roles)
    if any(r in (Role.CONTOUR, Role.ANCHOR) for r in roles):
        return Hardness.RETAIN
    return Hardness.GUIDE


def compute_proportions(components: Sequence[Component],
                        global_box: OrientedBox) -> tuple[ComponentProportion, ...]:
    global_max = 2.0 * global_box.half_extents[0]
    out = []
    for comp in components:
        extents = comp.extents_sorted
        # a tilted component's own box can be marginally longer than the
        # global box's longest side; ratios are clamped into (0, 1]
        ratio = min(1.0, extents[0] / global_max)
        aspect = tuple(e / extents[0] for e in extents)
        out.append(ComponentProportion(component_id=comp.component_id,
                                       scale_ratio=ratio, aspect=aspect))
    return tuple(out)


def _footprint(corners: np.ndarray) -> tuple[float, float, float, float]:
    return (float(corners[:, 0].min()), float(corners[:, 0].max()),
            float(corners[:, 2].min()), float(corners[:, 2].max()))


def _footprint_overlap(a: tuple, b: tuple) -> float:
    w = min(a[1], b[1]) - max(a[0], b[0])
    d = min(a[3], b[3]) - max(a[2], b[2])
    return max(0.0, w) * max(0.0, d)


def _is_above(sub: Component, obj: Component) -> tuple[bool, float]:
    sub_corners = sub.box.corners()
    obj_corners = obj.box.corners()
    gap = float(sub_corners[:, 1].min() - obj_corners[:, 1].max())
    if gap < -ABOVE_GAP_TOL:
        return False, gap
    fp_sub = _footprint(sub_corners)
    fp_obj = _footprint(obj_corners)
    area_sub = (fp_sub[1] - fp_sub[0]) * (fp_sub[3] - fp_sub[2])
    area_obj = (fp_obj[1] - fp_obj[0]) * (fp_obj[3] - fp_obj[2])
    overlap = _footprint_overlap(fp_sub, fp_obj)
    smaller = min(area_sub, area_obj)
    return overlap >= ABOVE_FOOTPRINT_OVERLAP * smaller and smaller > 0.0, gap


def _contains_fraction(container: Component, samples: np.ndarray) -> float:
    inside = container.box.contains(samples)
    return float(np.count_nonzero(inside)) / len(samples)


def _min_sample_distance(a: np.ndarray, b: np.ndarray) -> float:
    from scipy.spatial import cKDTree

    return float(cKDTree(a).query(b, k=1)[0].min())


def derive_relations(components: Sequence[Component],
                     samples: dict[int, np.ndarray]) -> tuple[SpatialRelation, ...]:
    """Pairwise above/contains/adjacent relations between component boxes and
    their resampled samples, in canonical order."""
    above: list[SpatialRelation] = []
    contains: list[SpatialRelation] = []
    adjacent: list[SpatialRelation] = []
    contains_pairs: set[tuple[int, int]] = set()

    for a in components:
        for b in components:
            if a.component_id == b.component_id:
                continue
            frac = _contains_fraction(a, samples[b.component_id])
            if frac >= CONTAINS_FRACTION:
                contains_pairs.add((a.component_id, b.component_id))
                contains.append(SpatialRelation(RelationKind.CONTAINS, a.component_id,
                                                b.component_id, frac))

    for a in components:
        for b in components:
            if a.component_id == b.component_id:
                continue
            ok_ab, gap = _is_above(a, b)
            if not ok_ab:
                continue
            ok_ba, _ = _is_above(b, a)
            if ok_ba:
                continue  # same level both ways: neither is above
            above.append(SpatialRelation(RelationKind.ABOVE, a.component_id,
                                         b.component_id, gap))

    for i, a in enumerate(components):
        for b in components[i + 1:]:
            pair = (a.component_id, b.component_id)
            if pair in contains_pairs or pair[::-1] in contains_pairs:
                continue
            dist = _min_sample_distance(samples[a.component_id], samples[b.component_id])
            if dist <= ADJACENT_DISTANCE:
                sub, obj = sorted(pair)
                adjacent.append(SpatialRelation(RelationKind.ADJACENT, sub, obj, dist))

    rels = above + contains + adjacent
    rels.sort(key=lambda r: (_RELATION_ORDER[r.kind], r.subject, r.object))
    return tuple(rels)


# --- compile pipeline ---

def default_epsilon(doc: SketchDocument) -> float:
    """max(1 cm, 1.5 x median gap between consecutive raw stroke points),
    measured after calibration."""
    gaps: list[float] = []
    scale = doc.calibration_scale
    for s in doc.strokes.values():
        for a, b in zip(s.points, s.points[1:]):
            gaps.append(a.distance_to(b) * scale)
    if not gaps:
        return MIN_EPSILON
    return max(MIN_EPSILON, EPSILON_SPACING_FACTOR * float(np.median(gaps)))


def _calibrated(doc: SketchDocument) -> SketchDocument:
    if doc.calibration_scale == 1.0:
        return doc
    scale = doc.calibration_scale
    from dataclasses import replace
    strokes = {
        sid: replace(s, points=tuple(p.scaled(scale) for p in s.points))
        for sid, s in doc.strokes.items()
    }
    return replace(doc, strokes=strokes)


def compile(doc: SketchDocument, *, epsilon: float | None = None,
            resample_spacing: float = DEFAULT_RESAMPLE_SPACING) -> ConstraintSet:
    """Compile a document into its constraint set. Pure and deterministic."""
    if not doc.strokes:
        raise EmptySketch("cannot compile a document with no strokes")
    if not math.isfinite(resample_spacing) or resample_spacing <= 0.0:
        raise NonPositiveSpacing(f"resample_spacing must be > 0, got {resample_spacing!r}")
    if epsilon is None:
        epsilon = default_epsilon(doc)

    calibrated = _calibrated(doc)
    graph = build_junction_graph(calibrated, epsilon, resample_spacing)
    groups = connected_components(graph)

    samples_by_stroke = {e.stroke_id: np.array([p.to_list() for p in e.polyline])
                         for e in graph.edges}
    # boxes cover both the resampled samples and the raw calibrated vertices
    fit_points_by_stroke = {
        sid: np.vstack([samples_by_stroke[sid],
                        np.array([p.to_list() for p in calibrated.strokes[sid].points])])
        for sid in samples_by_stroke
    }

    components: list[Component] = []
    samples: dict[int, np.ndarray] = {}
    for idx, stroke_ids in enumerate(groups, start=1):
        pts = np.vstack([fit_points_by_stroke[sid] for sid in stroke_ids])
        box = fit_oriented_box(pts)
        roles = [calibrated.strokes[sid].role for sid in stroke_ids]
        components.append(Component(
            component_id=idx,
            stroke_ids=stroke_ids,
            box=box,
            extents_sorted=tuple(2.0 * h for h in box.half_extents),
            hardness=assign_hardness(roles),
        ))
        samples[idx] = np.vstack([samples_by_stroke[sid] for sid in stroke_ids])

    global_box = fit_oriented_box(np.vstack(list(fit_points_by_stroke.values())))
    proportions = compute_proportions(components, global_box)
    relations = derive_relations(components, samples)

    return ConstraintSet(
        source_digest=document_digest(doc),
        source_revision=doc.revision,
        global_box=global_box,
        components=tuple(components),
        relations=relations,
        scaffold=graph,
        proportions=proportions,
        resample_spacing=float(resample_spacing),
    )


def serialize_constraints(cs: ConstraintSet) -> bytes:
    return canonical_dumps(cs.to_dict())


def parse_constraints(data: bytes | str) -> ConstraintSet:
    try:
        obj = canonical_loads(data)
    except ValueError as exc:
        raise MalformedConstraintSet(f"not valid JSON: {exc}") from exc
    return ConstraintSet.from_dict(obj)
