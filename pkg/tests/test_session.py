import base64

import pytest

from spatialprompt import errors
from spatialprompt.backend import BackendConfig
from spatialprompt.geometry import Point3, Quaternion
from spatialprompt.session import (
    ASSET_READY,
    GENERATION_STATUS,
    OP_APPLIED,
    OP_REJECTED,
    PALETTE,
    PRESENCE_UPDATE,
    SESSION_CAP,
    WELCOME,
    ClientSession,
    Message,
    ServerSession,
    run_simulated_session,
)
from spatialprompt.sketch import (
    Role,
    Stroke,
    add_stroke,
    delete_stroke,
    document_digest,
    parse as parse_document,
    transform_stroke,
)
from spatialprompt.validation import ValidationReport

from conftest import _densify, random_stroke, scripted_actions


def join_msg(pid, session="s1"):
    return Message(type="join", session_id=session, sender_id=pid,
                   payload={"display_name": pid.upper()})


def make_stroke(sid, author, role=Role.SCAFFOLD, shift=0.0):
    return Stroke(stroke_id=sid, author_id=author, role=role,
                  points=_densify(Point3(shift, 0, 0), Point3(shift + 0.5, 0.5, 0.5)),
                  created_at=1_700_000_000_000, color_index=9)


def joined_server(n=2):
    server = ServerSession("s1")
    for i in range(n):
        server.handle_join(f"conn{i}", join_msg(f"p{i}"))
    return server


class TestJoin:
    def test_color_assignment_by_join_order(self):
        server = ServerSession("s1")
        r0 = server.handle_join("conn0", join_msg("p0"))
        assert r0.outbound[0][1].type == WELCOME
        assert r0.outbound[0][1].payload["color_index"] == 0
        r1 = server.handle_join("conn1", join_msg("p1"))
        assert r1.outbound[0][1].payload["color_index"] == 1

    def test_eleventh_joiner_wraps_palette(self):
        server = ServerSession("s1")
        for i in range(11):
            result = server.handle_join(f"conn{i}", join_msg(f"p{i}"))
        assert result.outbound[0][1].payload["color_index"] == 0
        assert len(PALETTE) == 10

    def test_session_full(self):
        server = ServerSession("s1")
        for i in range(SESSION_CAP):
            server.handle_join(f"conn{i}", join_msg(f"p{i}"))
        result = server.handle_join("conn-extra", join_msg("p-extra"))
        assert result.outbound[0][1].type == OP_REJECTED
        assert result.outbound[0][1].payload["reason"] == "SessionFull"

    def test_duplicate_participant_id(self):
        server = joined_server(1)
        result = server.handle_join("other-conn", join_msg("p0"))
        assert result.outbound[0][1].payload["reason"] == "DuplicateParticipantId"

    def test_rejoin_same_connection_is_resync(self):
        server = joined_server(1)
        result = server.handle_join("conn0", join_msg("p0"))
        assert [m.type for _, m in result.outbound] == [WELCOME]

    def test_presence_broadcast_to_others(self):
        server = joined_server(2)
        result = server.handle_join("conn2", join_msg("p2"))
        types = {(conn, m.type) for conn, m in result.outbound}
        assert ("conn2", WELCOME) in types
        assert ("conn0", PRESENCE_UPDATE) in types
        assert ("conn1", PRESENCE_UPDATE) in types


class TestSubmitOp:
    def test_applied_broadcast_to_all_including_sender(self):
        server = joined_server(2)
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        result = server.handle_submit_op(
            "conn0", Message("submit_op", "s1", "p0", {"op": op.to_dict()}))
        conns = sorted(conn for conn, m in result.outbound if m.type == OP_APPLIED)
        assert conns == ["conn0", "conn1"]
        applied = result.outbound[0][1].payload["op"]
        assert applied["seq"] == 1
        assert server.document.revision == 1

    def test_transform_after_delete_rejected(self):
        server = joined_server(2)
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": op.to_dict()}))
        delete = delete_stroke("s-a", "p0", op_id="op-del")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": delete.to_dict()}))
        transform = transform_stroke("s-a", "p1", Quaternion.identity(),
                                     Point3(0, 0, 0), 1.0, op_id="op-tr")
        result = server.handle_submit_op(
            "conn1", Message("submit_op", "s1", "p1", {"op": transform.to_dict()}))
        assert result.outbound == [("conn1", result.outbound[0][1])]
        assert result.outbound[0][1].type == OP_REJECTED
        assert result.outbound[0][1].payload["reason"] == "UnknownStroke"
        assert result.outbound[0][1].payload["op_id"] == "op-tr"

    def test_color_overwritten_with_sender_color(self):
        server = joined_server(3)
        stroke = make_stroke("s-b", "p2")  # carries color 9
        op = add_stroke(stroke, op_id="op-b")
        server.handle_submit_op("conn2", Message("submit_op", "s1", "p2", {"op": op.to_dict()}))
        assert server.document.strokes["s-b"].color_index == 2

    def test_non_participant_rejected(self):
        server = joined_server(1)
        op = add_stroke(make_stroke("s-x", "ghost"), op_id="op-x")
        result = server.handle_submit_op(
            "conn9", Message("submit_op", "s1", "ghost", {"op": op.to_dict()}))
        assert result.outbound[0][1].payload["reason"] == "NotAParticipant"

    def test_seq_dense(self):
        server = joined_server(1)
        for i in range(5):
            op = add_stroke(make_stroke(f"s{i}", "p0", shift=float(i)), op_id=f"op{i}")
            server.handle_submit_op("conn0", Message("submit_op", "s1", "p0",
                                                     {"op": op.to_dict()}))
        seqs = [op.seq for op in server.document.op_log]
        assert seqs == [1, 2, 3, 4, 5]


class TestTriggerGeneration:
    def trigger(self, server, conn, pid, text="a sculpture", seed=7):
        return server.handle_trigger_generation(
            conn, Message("trigger_generation", "s1", pid,
                          {"prompt": {"text": text}, "seed": seed}))

    def test_empty_sketch_fails(self):
        server = joined_server(2)
        result = self.trigger(server, "conn0", "p0")
        frames = [m for _, m in result.outbound]
        assert all(m.type == GENERATION_STATUS for m in frames)
        assert frames[0].payload["state"] == "failed"
        assert frames[0].payload["failure_reason"] == "EmptySketch"
        assert not result.jobs

    def test_mock_generation_produces_passing_asset(self):
        server = joined_server(2)
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": op.to_dict()}))
        result = self.trigger(server, "conn0", "p0")
        assert len(result.jobs) == 1
        statuses = [m for _, m in result.outbound if m.type == GENERATION_STATUS]
        assert statuses and statuses[0].payload["state"] == "running"
        job = result.jobs[0]
        outcome = server.run_generation_job(job)
        fin = server.finish_generation(job, outcome)
        ready = [m for _, m in fin.outbound if m.type == ASSET_READY]
        assert len(ready) == 2  # both participants
        payload = ready[0].payload
        assert payload["request_id"] == job.request_id
        report = ValidationReport.from_dict(payload["report"])
        assert report.overall_pass
        base64.b64decode(payload["obj_base64"])
        assert server.active_generation is None

    def test_second_trigger_while_busy_rejected(self):
        server = joined_server(2)
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": op.to_dict()}))
        first = self.trigger(server, "conn0", "p0")
        assert first.jobs
        second = self.trigger(server, "conn1", "p1")
        assert second.outbound[0][1].type == OP_REJECTED
        assert second.outbound[0][1].payload["reason"] == "GenerationBusy"
        assert second.outbound[0][0] == "conn1"

    def test_edits_during_generation_keep_request_revision(self):
        server = joined_server(1)
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": op.to_dict()}))
        result = self.trigger(server, "conn0", "p0")
        job = result.jobs[0]
        op2 = add_stroke(make_stroke("s-b", "p0", shift=3.0), op_id="op-b")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": op2.to_dict()}))
        assert job.request.constraint_set.source_revision == 1
        assert server.document.revision == 2

    def test_oversized_asset_reported(self, monkeypatch):
        server = joined_server(1)
        monkeypatch.setattr("spatialprompt.session.MAX_ASSET_B64_CHARS", 64)
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        server.handle_submit_op("conn0", Message("submit_op", "s1", "p0", {"op": op.to_dict()}))
        result = self.trigger(server, "conn0", "p0")
        job = result.jobs[0]
        fin = server.finish_generation(job, server.run_generation_job(job))
        status = fin.outbound[0][1]
        assert status.type == GENERATION_STATUS
        assert status.payload["failure_reason"] == "AssetTooLarge"


class TestClientSession:
    def welcome_client(self):
        server = ServerSession("s1")
        client = ClientSession("s1", "p0")
        join = client.begin_join()
        result = server.handle_join("conn0", join)
        client.on_message(result.outbound[0][1])
        return server, client

    def test_own_op_promoted_on_ack(self):
        server, client = self.welcome_client()
        op = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        frame = client.submit_op(op)
        assert len(client.pending) == 1
        result = server.handle_submit_op("conn0", frame)
        client.on_message(result.outbound[0][1])
        assert client.pending == []
        assert client.last_seq == 1
        assert client.digest() == document_digest(server.document)

    def test_sequence_gap_requests_resync(self):
        server, client = self.welcome_client()
        op3 = add_stroke(make_stroke("s-c", "p0"), op_id="op-c")
        fake = Message("op_applied", "s1", "server",
                       {"op": {**op3.to_dict(), "seq": 5}})
        replies = client.on_message(fake)
        assert [m.type for m in replies] == ["join"]
        assert client.phase == "joining"
        # server treats re-join on the same connection as a resync
        result = server.handle_join("conn0", replies[0])
        client.on_message(result.outbound[0][1])
        assert client.phase == "synced"
        assert client.digest() == document_digest(server.document)

    def test_rejected_pending_overlay_dropped(self):
        server, client = self.welcome_client()
        server2 = server  # second participant shares the server
        result = server.handle_join("conn1", join_msg("p1"))
        client.on_message(result.outbound[1][1])  # presence

        add = add_stroke(make_stroke("s-a", "p0"), op_id="op-a")
        fr = client.submit_op(add)
        res = server.handle_submit_op("conn0", fr)
        client.on_message(res.outbound[0][1])

        # foreign delete lands first, then our transform gets rejected
        delete = delete_stroke("s-a", "p1", op_id="op-del")
        res = server.handle_submit_op("conn1", Message("submit_op", "s1", "p1",
                                                       {"op": delete.to_dict()}))
        transform = transform_stroke("s-a", "p0", Quaternion.identity(),
                                     Point3(1, 0, 0), 1.0, op_id="op-tr")
        fr2 = client.submit_op(transform)
        assert len(client.overlay_document().op_log) == len(client.document.op_log) + 1
        client.on_message(res.outbound[0][1])  # delete applied
        rej = server.handle_submit_op("conn0", fr2)
        assert rej.outbound[0][1].type == OP_REJECTED
        client.on_message(rej.outbound[0][1])
        assert client.pending == []
        assert client.digest() == document_digest(server.document)
        assert client.rejections and client.rejections[0]["reason"] == "UnknownStroke"


class TestSnapshot:
    def test_fresh_session(self):
        server = ServerSession("s1")
        data, last_seq = server.snapshot()
        doc = parse_document(data)
        assert doc.revision == 0 and not doc.strokes
        assert last_seq == 0

    def test_after_three_ops(self):
        server = joined_server(1)
        for i in range(3):
            op = add_stroke(make_stroke(f"s{i}", "p0", shift=float(i)), op_id=f"op{i}")
            server.handle_submit_op("conn0", Message("submit_op", "s1", "p0",
                                                     {"op": op.to_dict()}))
        data, last_seq = server.snapshot()
        doc = parse_document(data)
        assert doc.revision == 3
        assert last_seq == 3
        assert document_digest(doc) == document_digest(server.document)


class TestMessageFraming:
    def test_round_trip(self):
        msg = Message("join", "s1", "p0", {"display_name": "P0"})
        again = Message.from_json(msg.to_json())
        assert again == msg

    def test_unknown_type_rejected(self):
        with pytest.raises(errors.ProtocolError):
            Message.from_json('{"type":"paint_the_moon","payload":{}}')

    def test_unknown_fields_ignored(self):
        frame = ('{"type":"join","session_id":"s1","sender_id":"p0",'
                 '"payload":{"display_name":"x"},"future_field":42}')
        msg = Message.from_json(frame)
        assert msg.type == "join"

    def test_bad_json_rejected(self):
        with pytest.raises(errors.ProtocolError):
            Message.from_json("{nope")


class TestSimulatedTransport:
    def test_two_clients_converge(self):
        scripts = {f"c{i}": scripted_actions(f"c{i}", 20) for i in range(2)}
        result = run_simulated_session("sess", scripts, schedule_seed=42)
        assert result.converged, result.transcript[-20:]

    def test_zero_ops_trivially_converge(self):
        scripts = {"c0": [], "c1": []}
        result = run_simulated_session("sess", scripts, schedule_seed=1)
        assert result.converged
        assert result.server_document.revision == 0

    def test_same_seed_identical_transcript(self):
        scripts1 = {f"c{i}": scripted_actions(f"c{i}", 10) for i in range(3)}
        scripts2 = {f"c{i}": scripted_actions(f"c{i}", 10) for i in range(3)}
        r1 = run_simulated_session("sess", scripts1, schedule_seed=7)
        r2 = run_simulated_session("sess", scripts2, schedule_seed=7)
        assert r1.transcript == r2.transcript
        assert r1.server_digest == r2.server_digest

    def test_seq_density_and_attribution(self):
        scripts = {f"c{i}": scripted_actions(f"c{i}", 15) for i in range(3)}
        result = run_simulated_session("sess", scripts, schedule_seed=99)
        assert result.converged
        doc = result.server_document
        seqs = [op.seq for op in doc.op_log]
        assert seqs == list(range(1, len(seqs) + 1))
        colors = {cid: c.color_index for cid, c in result.clients.items()}
        for stroke in doc.strokes.values():
            assert stroke.color_index == colors[stroke.author_id]

    def test_generation_through_harness(self):
        def trigger_action(client, rng):
            return client.trigger_generation("a chunky sculpture", seed=3)

        scripts = {
            "c0": scripted_actions("c0", 6) + [trigger_action],
            "c1": scripted_actions("c1", 6),
        }
        result = run_simulated_session("sess", scripts, schedule_seed=11,
                                       backend_config=BackendConfig(kind="mock"))
        assert result.converged
        events = [m.type for m in result.clients["c1"].generation_events]
        assert events.count(ASSET_READY) <= 1
        if ASSET_READY in events:
            assert result.clients["c0"].last_asset is not None
