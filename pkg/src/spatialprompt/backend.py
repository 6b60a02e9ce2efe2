"""Generation backends behind one contract: a deterministic procedural mock
and a remote text-to-3D adapter with polling, retries, and post-hoc
constraint enforcement.

The mock turns every scaffold edge into a closed triangulated tube plus an
octahedron at every junction; it exists so the validator always has a
constructive asset that satisfies the compiled constraints. The remote
adapter speaks a minimal task-based REST shape (create, poll, download) and
rescales downloaded assets into the global bounding region, since external
text-to-3D services accept no geometric conditioning.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .compiler import OrientedBox
from .errors import (
    AssetTooLarge,
    BackendRejected,
    ConfigurationError,
    DegenerateMesh,
    EmptyConstraintSet,
    GenerationFailed,
    MalformedAsset,
    NetworkError,
    TaskTimeout,
)
from .meshio import TriangleMesh, load_mesh_obj
from .prompting import GenerationRequest, compose_backend_prompt

MIN_TUBE_RADIUS = 0.005          # meters
TUBE_RADIUS_DIAGONAL_FACTOR = 0.03
TUBE_SIDES = 8

API_KEY_ENV = "SPATIALPROMPT_API_KEY"
BACKEND_URL_ENV = "SPATIALPROMPT_BACKEND_URL"

HTTP_ATTEMPTS = 3                # tries per HTTP operation before giving up
MAX_ASSET_BYTES = 10 * 1024 * 1024


class TaskState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass
class TaskStatus:
    state: TaskState
    progress: Optional[int] = None
    failure_reason: Optional[str] = None
    asset: Optional[TriangleMesh] = None

    def __post_init__(self):
        has_asset = self.asset is not None
        if has_asset != (self.state == TaskState.SUCCEEDED):
            raise ValueError("asset must be present exactly when succeeded")


@dataclass
class BackendConfig:
    kind: str = "mock"               # "mock" or "remote"
    endpoint: Optional[str] = None
    api_key: Optional[str] = None
    poll_initial: float = 2.0
    poll_multiplier: float = 1.5
    poll_cap: float = 15.0
    overall_timeout: float = 300.0
    max_asset_bytes: int = MAX_ASSET_BYTES

    def validate(self) -> None:
        if self.kind not in ("mock", "remote"):
            raise ConfigurationError(f"unknown backend kind {self.kind!r}")
        for name in ("poll_initial", "poll_cap", "overall_timeout"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.poll_multiplier <= 1.0:
            raise ConfigurationError("poll_multiplier must be > 1")
        if self.kind == "remote":
            if not self.endpoint:
                raise ConfigurationError("remote backend requires an endpoint URL")
            if not self.api_key:
                raise ConfigurationError(f"remote backend requires an api key ({API_KEY_ENV})")


# --- procedural mock ---

def _tube_radius(box: OrientedBox) -> float:
    return max(MIN_TUBE_RADIUS, TUBE_RADIUS_DIAGONAL_FACTOR * box.diagonal())


def _segment_directions(samples: np.ndarray) -> np.ndarray:
    diffs = np.diff(samples, axis=0)
    norms = np.linalg.norm(diffs, axis=1)
    dirs = np.zeros_like(diffs)
    last = None
    for i in range(len(diffs)):
        if norms[i] > 1e-12:
            last = diffs[i] / norms[i]
        if last is not None:
            dirs[i] = last
    # leading zero-length segments inherit the first real direction
    first = next((dirs[i] for i in range(len(diffs)) if np.linalg.norm(dirs[i]) > 0),
                 np.array([1.0, 0.0, 0.0]))
    for i in range(len(diffs)):
        if np.linalg.norm(dirs[i]) == 0.0:
            dirs[i] = first
        else:
            break
    return dirs


def _initial_normal(tangent: np.ndarray) -> np.ndarray:
    # pick the world axis least aligned with the tangent for a stable frame
    candidates = np.eye(3)[np.argsort(np.abs(tangent))]
    ref = candidates[0]
    u = ref - np.dot(ref, tangent) * tangent
    return u / np.linalg.norm(u)


def _transport_frames(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample orthonormal ring frames (u, v) transported along the path."""
    n = len(samples)
    dirs = _segment_directions(samples)
    tangents = np.vstack([dirs, dirs[-1:]])
    u = np.zeros((n, 3))
    v = np.zeros((n, 3))
    u[0] = _initial_normal(tangents[0])
    v[0] = np.cross(tangents[0], u[0])
    for i in range(1, n):
        t_prev, t_cur = tangents[i - 1], tangents[i]
        axis = np.cross(t_prev, t_cur)
        s = np.linalg.norm(axis)
        c = float(np.clip(np.dot(t_prev, t_cur), -1.0, 1.0))
        if s < 1e-12:
            u[i] = u[i - 1] if c > 0 else -u[i - 1]
        else:
            axis = axis / s
            angle = math.atan2(s, c)
            u[i] = _rotate_about(u[i - 1], axis, angle)
        u[i] = u[i] - np.dot(u[i], t_cur) * t_cur
        u[i] = u[i] / np.linalg.norm(u[i])
        v[i] = np.cross(t_cur, u[i])
    return u, v


def _rotate_about(vec: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return vec * c + np.cross(axis, vec) * s + axis * np.dot(axis, vec) * (1 - c)


def _append_tube(samples: np.ndarray, radius: float,
                 vertices: list, triangles: list) -> None:
    n = len(samples)
    u, v = _transport_frames(samples)
    base = len(vertices)
    theta = 2.0 * math.pi * np.arange(TUBE_SIDES) / TUBE_SIDES
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    for i in range(n):
        ring = samples[i] + radius * (np.outer(cos_t, u[i]) + np.outer(sin_t, v[i]))
        vertices.extend(ring.tolist())
    for i in range(n - 1):
        a = base + i * TUBE_SIDES
        b = a + TUBE_SIDES
        for j in range(TUBE_SIDES):
            k = (j + 1) % TUBE_SIDES
            triangles.append((a + j, a + k, b + k))
            triangles.append((a + j, b + k, b + j))
    # end caps: apex at the exact polyline endpoints, triangle fans
    apex_start = len(vertices)
    vertices.append(samples[0].tolist())
    for j in range(TUBE_SIDES):
        k = (j + 1) % TUBE_SIDES
        triangles.append((apex_start, base + k, base + j))
    apex_end = len(vertices)
    vertices.append(samples[-1].tolist())
    last = base + (n - 1) * TUBE_SIDES
    for j in range(TUBE_SIDES):
        k = (j + 1) % TUBE_SIDES
        triangles.append((apex_end, last + j, last + k))


_OCTA_FACES = ((0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
               (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5))


def _append_octahedron(center: np.ndarray, radius: float,
                       vertices: list, triangles: list) -> None:
    base = len(vertices)
    offsets = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0],
                        [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64)
    vertices.extend((center + radius * offsets).tolist())
    triangles.extend((base + a, base + b, base + c) for a, b, c in _OCTA_FACES)


def mock_generate(req: GenerationRequest) -> TriangleMesh:
    """Deterministic stand-in for a generative model: tubes along every
    scaffold edge plus octahedra at junctions, sized from component boxes."""
    cs = req.constraint_set
    if not cs.components:
        raise EmptyConstraintSet("constraint set has no components")
    radius_by_stroke: dict[str, float] = {}
    for comp in cs.components:
        r = _tube_radius(comp.box)
        for sid in comp.stroke_ids:
            radius_by_stroke[sid] = r

    vertices: list = []
    triangles: list = []
    node_radius: dict[int, float] = {}
    for edge in cs.scaffold.edges:
        samples = np.array([p.to_list() for p in edge.polyline], dtype=np.float64)
        r = radius_by_stroke[edge.stroke_id]
        _append_tube(samples, r, vertices, triangles)
        for node in (edge.node_a, edge.node_b):
            node_radius[node] = max(node_radius.get(node, 0.0), r)
    for node_index in sorted(node_radius):
        center = np.array(cs.scaffold.nodes[node_index].to_list(), dtype=np.float64)
        _append_octahedron(center, node_radius[node_index], vertices, triangles)
    return TriangleMesh(np.array(vertices, dtype=np.float64),
                        np.array(triangles, dtype=np.int64))


# --- post-hoc constraint enforcement ---

@dataclass
class FitResult:
    mesh: TriangleMesh
    scale: float
    degenerate_axes: tuple[int, ...] = ()


def enforce_fit(mesh: TriangleMesh, global_box: OrientedBox) -> FitResult:
    """Uniformly rescale and recenter a mesh so its box-frame extents fit the
    global box. The binding axis ends up exactly on the box surface, which
    makes the operation idempotent."""
    if mesh.vertex_count == 0:
        raise DegenerateMesh("empty mesh")
    axes = global_box.axes_array()
    center = global_box.center_array()
    local = (mesh.vertices - center) @ axes.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    extents = hi - lo
    he = np.array(global_box.half_extents)
    usable = extents > 1e-12
    if not np.any(usable):
        raise DegenerateMesh("mesh has zero extent on every axis")
    scale = float(np.min(2.0 * he[usable] / extents[usable]))
    mid = (lo + hi) / 2.0
    fitted_local = (local - mid) * scale
    fitted = TriangleMesh(center + fitted_local @ axes, mesh.triangles.copy())
    degenerate = tuple(int(i) for i in np.nonzero(~usable)[0])
    return FitResult(mesh=fitted, scale=scale, degenerate_axes=degenerate)


# --- backends ---

class MockBackend:
    """In-process backend; every task succeeds on its first poll."""

    def __init__(self):
        self._tasks: dict[str, GenerationRequest] = {}

    def submit(self, req: GenerationRequest) -> str:
        task_id = f"mock-{req.request_id}"
        self._tasks[task_id] = req
        return task_id

    def poll(self, task_id: str) -> TaskStatus:
        req = self._tasks.get(task_id)
        if req is None:
            return TaskStatus(state=TaskState.FAILED, failure_reason="unknown task")
        return TaskStatus(state=TaskState.SUCCEEDED, progress=100,
                          asset=mock_generate(req))


class RemoteBackend:
    """Adapter for a task-based remote service:

    POST {endpoint}/tasks {prompt, seed, face_count} -> {task_id}
    GET  {endpoint}/tasks/{id} -> {state, progress, asset_url?, failure_reason?}
    GET  asset_url -> OBJ bytes

    Polling backs off geometrically (poll_initial x poll_multiplier, capped);
    each HTTP operation is attempted up to HTTP_ATTEMPTS times before raising.
    """

    def __init__(self, config: BackendConfig, *, session=None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        config.validate()
        self.config = config
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._clock = clock
        self._sleep = sleep

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.config.api_key}"}

    def _request(self, method: str, url: str, **kwargs):
        last_error: Exception | None = None
        for _ in range(HTTP_ATTEMPTS):
            try:
                resp = self._session.request(method, url, headers=self._headers(),
                                             timeout=30, **kwargs)
            except Exception as exc:  # transport failure
                last_error = NetworkError(f"{method} {url}: {exc}")
                continue
            if 200 <= resp.status_code < 300:
                return resp
            last_error = BackendRejected(
                f"{method} {url}: HTTP {resp.status_code}: {resp.text[:200]}")
            if resp.status_code < 500:
                break  # client errors will not heal on retry
        raise last_error

    def submit(self, req: GenerationRequest) -> str:
        body = {
            "prompt": compose_backend_prompt(req),
            "seed": req.seed,
            "face_count": req.target_face_count,
        }
        resp = self._request("POST", f"{self.config.endpoint}/tasks", json=body)
        try:
            task_id = resp.json()["task_id"]
        except Exception as exc:
            raise MalformedAsset(f"submit response missing task_id: {exc}") from exc
        return str(task_id)

    def poll(self, task_id: str) -> TaskStatus:
        resp = self._request("GET", f"{self.config.endpoint}/tasks/{task_id}")
        try:
            payload = resp.json()
            state = TaskState(payload["state"])
        except Exception as exc:
            raise BackendRejected(f"unintelligible poll response: {exc}") from exc
        progress = payload.get("progress")
        if state == TaskState.SUCCEEDED:
            asset_url = payload.get("asset_url")
            if not asset_url:
                raise MalformedAsset("succeeded without asset_url")
            mesh = self._download(asset_url)
            return TaskStatus(state=state, progress=progress, asset=mesh)
        return TaskStatus(state=state, progress=progress,
                          failure_reason=payload.get("failure_reason"))

    def _download(self, url: str) -> TriangleMesh:
        resp = self._request("GET", url)
        data = resp.content
        if len(data) > self.config.max_asset_bytes:
            raise AssetTooLarge(
                f"asset is {len(data)} bytes (cap {self.config.max_asset_bytes})")
        try:
            mesh = load_mesh_obj(data)
            mesh.validate()
        except Exception as exc:
            raise MalformedAsset(f"undecodable asset: {exc}") from exc
        return mesh

    def run(self, req: GenerationRequest,
            on_progress: Callable[[TaskState, Optional[int]], None] | None = None
            ) -> tuple[str, TriangleMesh]:
        """Submit and poll to completion, honoring the overall timeout."""
        start = self._clock()
        task_id = self.submit(req)
        interval = self.config.poll_initial
        while True:
            status = self.poll(task_id)
            if on_progress is not None:
                on_progress(status.state, status.progress)
            if status.state == TaskState.SUCCEEDED:
                return task_id, status.asset
            if status.state == TaskState.FAILED:
                raise GenerationFailed(status.failure_reason or "backend reported failure")
            elapsed = self._clock() - start
            remaining = self.config.overall_timeout - elapsed
            if remaining <= 0:
                raise TaskTimeout(
                    f"no result after {self.config.overall_timeout} s (task {task_id})")
            self._sleep(min(interval, remaining))
            interval = min(interval * self.config.poll_multiplier, self.config.poll_cap)


@dataclass
class GenerationResult:
    mesh: TriangleMesh
    metadata: dict


def generate(req: GenerationRequest, config: BackendConfig, *,
             remote_backend: RemoteBackend | None = None,
             on_progress: Callable[[TaskState, Optional[int]], None] | None = None) -> GenerationResult:
    """Run one generation request to a finished mesh plus metadata."""
    config.validate()
    start = time.monotonic()
    if config.kind == "mock":
        backend = MockBackend()
        task_id = backend.submit(req)
        status = backend.poll(task_id)
        if on_progress is not None:
            on_progress(status.state, status.progress)
        if status.state != TaskState.SUCCEEDED:
            raise GenerationFailed(status.failure_reason or "mock backend failed")
        mesh, enforced, extra = status.asset, False, {}
    else:
        backend = remote_backend or RemoteBackend(config)
        task_id, raw_mesh = backend.run(req, on_progress)
        fit = enforce_fit(raw_mesh, req.constraint_set.global_box)
        mesh, enforced = fit.mesh, True
        extra = {"scale": fit.scale}
        if fit.degenerate_axes:
            extra["degenerate_axes"] = list(fit.degenerate_axes)
    elapsed_ms = int((time.monotonic() - start) * 1000)
    metadata = {"backend": config.kind, "elapsed_ms": elapsed_ms,
                "task_id": task_id, "enforced": enforced, **extra}
    return GenerationResult(mesh=mesh, metadata=metadata)
