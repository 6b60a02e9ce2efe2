"""Shared corpus generators. All randomness is seeded so failures replay."""

import math
import random

import pytest

from spatialprompt.geometry import Point3, Quaternion
from spatialprompt.sketch import (
    EditOp,
    Role,
    SketchDocument,
    Stroke,
    add_stroke,
    apply_op,
    delete_stroke,
    set_calibration,
    set_role,
    transform_stroke,
)

ROLES = [Role.CONTOUR, Role.SCAFFOLD, Role.ANCHOR]


def random_point(rng: random.Random, scale: float = 1.0) -> Point3:
    return Point3(
        rng.uniform(-scale, scale),
        rng.uniform(-scale, scale),
        rng.uniform(-scale, scale),
    )


def random_quaternion(rng: random.Random) -> Quaternion:
    # uniform-ish: normalize a 4-vector of gaussians
    while True:
        q = [rng.gauss(0, 1) for _ in range(4)]
        n = math.sqrt(sum(v * v for v in q))
        if n > 1e-6:
            return Quaternion(q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def random_stroke(rng: random.Random, stroke_id: str, author_id: str = "a0",
                  role: Role | None = None, origin: Point3 | None = None,
                  size: float = 0.5) -> Stroke:
    n = rng.randint(2, 8)
    base = origin or random_point(rng, 1.0)
    pts = [base]
    for _ in range(n - 1):
        prev = pts[-1]
        step = Point3(
            rng.uniform(-size, size),
            rng.uniform(-size, size),
            rng.uniform(-size, size),
        )
        pts.append(prev + step)
    if sum(pts[i].distance_to(pts[i + 1]) for i in range(len(pts) - 1)) <= 1e-9:
        pts[-1] = pts[-1] + Point3(size, 0.0, 0.0)
    return Stroke(
        stroke_id=stroke_id,
        author_id=author_id,
        role=role or rng.choice(ROLES),
        points=tuple(pts),
        created_at=rng.randint(1_600_000_000_000, 1_800_000_000_000),
        color_index=rng.randint(0, 9),
    )


def random_document(rng: random.Random, doc_id: str = "doc", max_ops: int = 20) -> SketchDocument:
    """Build a document through a random but always-valid op sequence."""
    doc = SketchDocument.empty(doc_id)
    n_ops = rng.randint(1, max_ops)
    counter = 0
    for _ in range(n_ops):
        choices = ["add"]
        if doc.strokes:
            choices += ["delete", "transform", "role", "calibrate"]
        kind = rng.choice(choices)
        if kind == "add":
            counter += 1
            op = add_stroke(random_stroke(rng, f"s{counter:04d}"), op_id=f"op{counter:06d}-add")
        elif kind == "delete":
            sid = rng.choice(sorted(doc.strokes))
            op = delete_stroke(sid, "a0", op_id=f"opdel-{sid}-{doc.revision}")
        elif kind == "transform":
            sid = rng.choice(sorted(doc.strokes))
            op = transform_stroke(
                sid, "a0", random_quaternion(rng), random_point(rng, 0.3),
                rng.uniform(0.5, 2.0), op_id=f"optr-{sid}-{doc.revision}",
            )
        elif kind == "role":
            sid = rng.choice(sorted(doc.strokes))
            op = set_role(sid, "a0", rng.choice(ROLES), op_id=f"oprole-{sid}-{doc.revision}")
        else:
            op = set_calibration(rng.uniform(0.2, 5.0), "a0", op_id=f"opcal-{doc.revision}")
        doc = apply_op(doc, op)
    if not doc.strokes:
        counter += 1
        doc = apply_op(doc, add_stroke(random_stroke(rng, f"s{counter:04d}"),
                                       op_id=f"op{counter:06d}-add"))
    return doc


def _densify(a: Point3, b: Point3, segments: int = 8) -> tuple[Point3, ...]:
    """Interior samples mimic pen input; endpoints stay exact for junctions."""
    pts = [a]
    for i in range(1, segments):
        t = i / segments
        pts.append(Point3(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t,
                          a.z + (b.z - a.z) * t))
    pts.append(b)
    return tuple(pts)


def _cube_cluster(rng: random.Random, prefix: str, center: Point3, side: float,
                  role: Role) -> list[Stroke]:
    """12 edge strokes of an axis-aligned cube, corners coincide exactly."""
    import itertools

    half = side / 2.0
    corners = [
        Point3(center.x + sx * half, center.y + sy * half, center.z + sz * half)
        for sx, sy, sz in itertools.product((-1, 1), repeat=3)
    ]
    strokes = []
    k = 0
    for i in range(8):
        for j in range(i + 1, 8):
            differs = sum(1 for a, b in zip(corners[i].to_list(), corners[j].to_list()) if a != b)
            if differs == 1:
                strokes.append(Stroke(
                    stroke_id=f"{prefix}e{k:02d}", author_id="a0", role=role,
                    points=_densify(corners[i], corners[j]),
                    created_at=1_700_000_000_000 + k, color_index=k % 10))
                k += 1
    return strokes


def _star_cluster(rng: random.Random, prefix: str, center: Point3, side: float,
                  role: Role) -> list[Stroke]:
    """Strokes from a shared hub out to the corners of the cluster cube."""
    import itertools

    half = side / 2.0
    strokes = []
    for k, (sx, sy, sz) in enumerate(itertools.product((-1, 1), repeat=3)):
        tip = Point3(center.x + sx * half, center.y + sy * half, center.z + sz * half)
        strokes.append(Stroke(
            stroke_id=f"{prefix}r{k:02d}", author_id="a1", role=role,
            points=_densify(center, tip),
            created_at=1_700_000_000_000 + k, color_index=k % 10))
    return strokes


def chunky_sketch(rng: random.Random, doc_id: str = "doc") -> SketchDocument:
    """A sketch whose components each span a cube-like region: the regime the
    procedural mock targets (tabletop objects, no pencil-thin boxes)."""
    doc = SketchDocument.empty(doc_id)
    n_clusters = rng.randint(1, 2)
    op_counter = 0
    for c in range(n_clusters):
        side = rng.uniform(0.4, 1.0)
        center = Point3(rng.uniform(-1, 1) + c * 2.5, rng.uniform(0, 1), rng.uniform(-1, 1))
        role = rng.choice(ROLES)
        maker = rng.choice([_cube_cluster, _star_cluster])
        for s in maker(rng, f"c{c}", center, side, role):
            op_counter += 1
            doc = apply_op(doc, add_stroke(s, op_id=f"op{op_counter:05d}"))
    if rng.random() < 0.3:
        op_counter += 1
        doc = apply_op(doc, set_calibration(rng.uniform(0.8, 1.25), "a0",
                                            op_id=f"op{op_counter:05d}"))
    return doc


def scripted_actions(client_id: str, n_ops: int):
    """Action closures for the simulated-transport harness. Targets are drawn
    from the client's current view, so deletes and transforms race naturally
    across clients (the conflicting pairs the convergence property needs)."""
    import itertools

    counter = itertools.count()

    def action(client, sched_rng):
        i = next(counter)
        known = sorted(client.overlay_document().strokes)
        kinds = ["add", "add"]
        if known:
            kinds += ["delete", "transform", "role", "calibrate"]
        kind = sched_rng.choice(kinds)
        base = f"{client.participant_id}-{i:04d}"
        if kind == "add":
            stroke = random_stroke(sched_rng, f"{base}-s", author_id=client.participant_id)
            return client.submit_op(add_stroke(stroke, op_id=f"{base}-add"))
        target = sched_rng.choice(known)
        if kind == "delete":
            return client.submit_op(delete_stroke(target, client.participant_id,
                                                  op_id=f"{base}-del"))
        if kind == "transform":
            return client.submit_op(transform_stroke(
                target, client.participant_id, random_quaternion(sched_rng),
                random_point(sched_rng, 0.2), sched_rng.uniform(0.5, 2.0),
                op_id=f"{base}-tr"))
        if kind == "role":
            return client.submit_op(set_role(target, client.participant_id,
                                             sched_rng.choice(ROLES), op_id=f"{base}-role"))
        return client.submit_op(set_calibration(sched_rng.uniform(0.5, 2.0),
                                                client.participant_id, op_id=f"{base}-cal"))

    return [action] * n_ops


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240811)
