import math

import numpy as np
import pytest

from spatialprompt import errors
from spatialprompt.backend import (
    BackendConfig,
    MockBackend,
    RemoteBackend,
    TaskState,
    enforce_fit,
    generate,
    mock_generate,
)
from spatialprompt.compiler import (
    ConstraintSet,
    JunctionGraph,
    OrientedBox,
    compile as compile_sketch,
)
from spatialprompt.geometry import Point3
from spatialprompt.meshio import TriangleMesh, export_mesh_obj
from spatialprompt.prompting import SemanticPrompt, assemble
from spatialprompt.sketch import Role, SketchDocument, Stroke, add_stroke, apply_op

from conftest import chunky_sketch
from stubserver import FakeClock, StubService


def single_stroke_request(resample_spacing=2.0):
    doc = apply_op(SketchDocument.empty("d"), add_stroke(Stroke(
        stroke_id="s1", author_id="a", role=Role.SCAFFOLD,
        points=(Point3(0, 0, 0), Point3(1, 0, 0)),
        created_at=0, color_index=0), op_id="op1"))
    cs = compile_sketch(doc, epsilon=0.01, resample_spacing=resample_spacing)
    return assemble(cs, SemanticPrompt(text="a rod"), seed=1)


def cube_mesh(side=1.0, center=(0.0, 0.0, 0.0)):
    import itertools
    c = np.array(center)
    verts = np.array([c + side * (np.array(bits) - 0.5)
                      for bits in itertools.product([0, 1], repeat=3)])
    tris = np.array([
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ])
    return TriangleMesh(verts, tris)


def remote_config(stub, **overrides):
    defaults = dict(kind="remote", endpoint=stub.base_url, api_key="test-key")
    defaults.update(overrides)
    return BackendConfig(**defaults)


class TestMockGenerate:
    def test_two_sample_segment_counts(self):
        req = single_stroke_request(resample_spacing=2.0)
        assert len(req.constraint_set.scaffold.edges[0].polyline) == 2
        mesh = mock_generate(req)
        # tube: 2 rings x 8 + 2 cap apexes; octahedra: 2 x 6 vertices
        assert mesh.vertex_count == 18 + 12
        # tube: 16 side + 16 cap; octahedra: 2 x 8
        assert mesh.triangle_count == 32 + 16

    def test_deterministic_export(self, rng):
        doc = chunky_sketch(rng)
        cs = compile_sketch(doc, resample_spacing=0.05)
        req = assemble(cs, SemanticPrompt(text="a thing"), seed=3)
        assert export_mesh_obj(mock_generate(req)) == export_mesh_obj(mock_generate(req))

    def test_empty_constraint_set(self):
        req = single_stroke_request()
        empty_cs = ConstraintSet(
            source_digest="0" * 64, source_revision=0,
            global_box=req.constraint_set.global_box,
            components=(), relations=(),
            scaffold=JunctionGraph(nodes=(), edges=()),
            proportions=(), resample_spacing=0.01)
        from dataclasses import replace
        with pytest.raises(errors.EmptyConstraintSet):
            mock_generate(replace(req, constraint_set=empty_cs))

    def test_tube_radius_floor(self):
        req = single_stroke_request()
        mesh = mock_generate(req)
        # stroke along x: tube radius = 3% of the component box diagonal
        diag = req.constraint_set.components[0].box.diagonal()
        r = max(0.005, 0.03 * diag)
        radial = np.sqrt(mesh.vertices[:, 1] ** 2 + mesh.vertices[:, 2] ** 2)
        assert radial.max() == pytest.approx(r, rel=1e-9)


class TestEnforceFit:
    def unit_box(self, half=1.0):
        return OrientedBox(center=(0, 0, 0),
                           axes=((1, 0, 0), (0, 1, 0), (0, 0, 1)),
                           half_extents=(half, half, half))

    def test_unit_cube_into_unit_half_extent_box(self):
        fit = enforce_fit(cube_mesh(side=1.0, center=(5, 5, 5)), self.unit_box(1.0))
        assert fit.scale == pytest.approx(2.0)
        np.testing.assert_allclose(fit.mesh.vertices.mean(axis=0), [0, 0, 0], atol=1e-12)

    def test_already_fitting_scale_one(self):
        fit = enforce_fit(cube_mesh(side=2.0, center=(0.5, 0, 0)), self.unit_box(1.0))
        assert fit.scale == pytest.approx(1.0)
        np.testing.assert_allclose(fit.mesh.vertices.mean(axis=0), [0, 0, 0], atol=1e-12)

    def test_elongated_mesh_limited_by_long_axis(self):
        mesh = cube_mesh(side=1.0)
        mesh = TriangleMesh(mesh.vertices * np.array([4.0, 1.0, 1.0]), mesh.triangles)
        fit = enforce_fit(mesh, self.unit_box(1.0))
        assert fit.scale == pytest.approx(0.5)

    def test_idempotent(self, rng):
        for _ in range(20):
            mesh = cube_mesh(side=rng.uniform(0.1, 5.0),
                             center=(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)))
            box = self.unit_box(rng.uniform(0.5, 2.0))
            once = enforce_fit(mesh, box)
            twice = enforce_fit(once.mesh, box)
            assert twice.scale == pytest.approx(1.0, abs=1e-12)
            assert np.max(np.abs(twice.mesh.vertices - once.mesh.vertices)) < 1e-9

    def test_planar_mesh_flagged(self):
        mesh = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                            np.array([[0, 1, 2]]))
        fit = enforce_fit(mesh, self.unit_box(1.0))
        assert fit.degenerate_axes == (2,)
        assert fit.scale == pytest.approx(2.0)

    def test_all_zero_extent_errors(self):
        mesh = TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
        with pytest.raises(errors.DegenerateMesh):
            enforce_fit(mesh, self.unit_box(1.0))


class TestMockBackendContract:
    def test_succeeds_on_first_poll(self):
        req = single_stroke_request()
        backend = MockBackend()
        task_id = backend.submit(req)
        status = backend.poll(task_id)
        assert status.state == TaskState.SUCCEEDED
        assert status.asset is not None

    def test_generate_mock_not_enforced(self):
        req = single_stroke_request()
        result = generate(req, BackendConfig(kind="mock"))
        assert result.metadata["enforced"] is False
        assert result.metadata["backend"] == "mock"
        assert result.mesh.geometry_equal(mock_generate(req))


class TestRemoteBackend:
    def test_success_path(self):
        req = single_stroke_request()
        asset = export_mesh_obj(cube_mesh())
        clock = FakeClock()
        with StubService(poll_states=[{"state": "pending", "progress": 0},
                                      {"state": "running", "progress": 50},
                                      {"state": "succeeded", "progress": 100}],
                         asset_bytes=asset) as stub:
            backend = RemoteBackend(remote_config(stub),
                                    clock=clock.monotonic, sleep=clock.sleep)
            task_id, mesh = backend.run(req)
        assert task_id == "task-1"
        assert mesh.vertex_count == 8
        assert clock.sleeps == [2.0, 3.0]
        assert stub.request_count("POST", "/tasks") == 1
        assert stub.request_count("GET", "/tasks/task-1") == 3

    def test_500_rejected_after_three_attempts(self):
        req = single_stroke_request()
        with StubService(submit_status=500) as stub:
            backend = RemoteBackend(remote_config(stub))
            with pytest.raises(errors.BackendRejected):
                backend.run(req)
            assert stub.request_count("POST", "/tasks") == 3

    def test_timeout_at_overall_budget(self):
        req = single_stroke_request()
        clock = FakeClock()
        with StubService(poll_states=[{"state": "running", "progress": 10}]) as stub:
            backend = RemoteBackend(remote_config(stub, overall_timeout=60.0),
                                    clock=clock.monotonic, sleep=clock.sleep)
            with pytest.raises(errors.TaskTimeout):
                backend.run(req)
        assert clock.now == 60.0
        assert clock.sleeps[:6] == [2.0, 3.0, 4.5, 6.75, 10.125, 15.0]
        assert all(s <= 15.0 for s in clock.sleeps)

    def test_poll_schedule_geometric_capped(self):
        req = single_stroke_request()
        clock = FakeClock()
        with StubService(poll_states=[{"state": "running"}]) as stub:
            backend = RemoteBackend(remote_config(stub, overall_timeout=120.0),
                                    clock=clock.monotonic, sleep=clock.sleep)
            with pytest.raises(errors.TaskTimeout):
                backend.run(req)
        assert clock.sleeps[:8] == [2.0, 3.0, 4.5, 6.75, 10.125, 15.0, 15.0, 15.0]

    def test_oversized_asset(self):
        req = single_stroke_request()
        asset = export_mesh_obj(cube_mesh())
        with StubService(poll_states=[{"state": "succeeded"}], asset_bytes=asset) as stub:
            backend = RemoteBackend(remote_config(stub, max_asset_bytes=16))
            with pytest.raises(errors.AssetTooLarge):
                backend.run(req)

    def test_malformed_asset(self):
        req = single_stroke_request()
        with StubService(poll_states=[{"state": "succeeded"}],
                         asset_bytes=b"this is not an obj") as stub:
            backend = RemoteBackend(remote_config(stub))
            with pytest.raises(errors.MalformedAsset):
                backend.run(req)

    def test_backend_failure_surfaces(self):
        req = single_stroke_request()
        with StubService(poll_states=[{"state": "failed",
                                       "failure_reason": "content policy"}]) as stub:
            backend = RemoteBackend(remote_config(stub))
            with pytest.raises(errors.GenerationFailed, match="content policy"):
                backend.run(req)

    def test_missing_api_key_no_network(self):
        req = single_stroke_request()
        with StubService() as stub:
            config = BackendConfig(kind="remote", endpoint=stub.base_url, api_key=None)
            with pytest.raises(errors.ConfigurationError):
                generate(req, config)
            assert stub.request_count() == 0

    def test_generate_remote_enforces_fit(self, rng):
        doc = chunky_sketch(rng)
        cs = compile_sketch(doc, resample_spacing=0.05)
        req = assemble(cs, SemanticPrompt(text="a crate"), seed=9)
        asset = export_mesh_obj(cube_mesh(side=7.0))
        clock = FakeClock()
        with StubService(poll_states=[{"state": "succeeded"}], asset_bytes=asset) as stub:
            backend = RemoteBackend(remote_config(stub),
                                    clock=clock.monotonic, sleep=clock.sleep)
            result = generate(req, remote_config(stub), remote_backend=backend)
        assert result.metadata["enforced"] is True
        box = cs.global_box
        local = (result.mesh.vertices - box.center_array()) @ box.axes_array().T
        extents = local.max(axis=0) - local.min(axis=0)
        assert np.all(extents <= 2.0 * np.array(box.half_extents) + 1e-9)

    def test_default_asset_cap_is_10mb(self):
        assert BackendConfig().max_asset_bytes == 10 * 1024 * 1024


class TestConfigValidation:
    def test_bad_kind(self):
        with pytest.raises(errors.ConfigurationError):
            BackendConfig(kind="imaginary").validate()

    def test_bad_multiplier(self):
        with pytest.raises(errors.ConfigurationError):
            BackendConfig(kind="mock", poll_multiplier=1.0).validate()

    def test_remote_requires_endpoint(self):
        with pytest.raises(errors.ConfigurationError):
            BackendConfig(kind="remote", api_key="k").validate()
