"""Collaborative editing sessions: an authoritative server state machine, a
client reconciliation state machine, and a deterministic in-process transport
harness for convergence testing.

Ordering model: the server applies operations in arrival order, stamps each
with a dense sequence number, and echoes the authoritative op (including the
sender's own) to every participant. Clients materialize snapshot + applied
ops; locally submitted ops live in a provisional overlay until acknowledged,
so every replica's digested document is identical once traffic quiesces.

The core is transport-free: handlers consume one inbound message and return
the frames to send plus any generation job to run off-thread. Both the
WebSocket service and the simulated harness drive it the same way.
"""

from __future__ import annotations

import base64
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .backend import BackendConfig, GenerationResult, generate
from .compiler import compile as compile_sketch
from .errors import (
    DuplicateParticipantId,
    EmptySketch,
    GenerationBusy,
    NotAParticipant,
    ProtocolError,
    SessionFull,
    SpatialPromptError,
)
from .jsoncanon import canonical_dumps, canonical_loads
from .meshio import export_mesh_obj
from .prompting import GenerationRequest, SemanticPrompt, assemble
from .sketch import (
    EditOp,
    OpKind,
    SketchDocument,
    apply_op,
    canonical_serialize,
    document_digest,
)
from .validation import validate

PALETTE = ("#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231",
           "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe")
SESSION_CAP = 16
MAX_ASSET_B64_CHARS = 10 * 1024 * 1024

# message types
JOIN = "join"
WELCOME = "welcome"
SUBMIT_OP = "submit_op"
OP_APPLIED = "op_applied"
OP_REJECTED = "op_rejected"
TRIGGER_GENERATION = "trigger_generation"
GENERATION_STATUS = "generation_status"
ASSET_READY = "asset_ready"
PRESENCE_UPDATE = "presence_update"
LEAVE = "leave"

_KNOWN_TYPES = {JOIN, WELCOME, SUBMIT_OP, OP_APPLIED, OP_REJECTED, TRIGGER_GENERATION,
                GENERATION_STATUS, ASSET_READY, PRESENCE_UPDATE, LEAVE}


@dataclass(frozen=True)
class Message:
    type: str
    session_id: str
    sender_id: str
    payload: dict

    def to_json(self) -> str:
        return canonical_dumps({
            "payload": self.payload,
            "sender_id": self.sender_id,
            "session_id": self.session_id,
            "type": self.type,
        }).decode("utf-8")

    @classmethod
    def from_json(cls, frame: str | bytes) -> "Message":
        try:
            data = canonical_loads(frame)
        except ValueError as exc:
            raise ProtocolError(f"frame is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ProtocolError("frame must be a JSON object")
        mtype = data.get("type")
        if mtype not in _KNOWN_TYPES:
            raise ProtocolError(f"unknown message type {mtype!r}")
        payload = data.get("payload", {})
        if not isinstance(payload, dict):
            raise ProtocolError("payload must be an object")
        # unknown envelope fields are ignored by contract
        return cls(
            type=mtype,
            session_id=str(data.get("session_id", "")),
            sender_id=str(data.get("sender_id", "")),
            payload=payload,
        )


@dataclass(frozen=True)
class Participant:
    participant_id: str
    display_name: str
    color_index: int

    def to_dict(self) -> dict:
        return {"color_index": self.color_index, "display_name": self.display_name,
                "participant_id": self.participant_id}


@dataclass
class GenerationJob:
    """Deferred work handed to the transport layer: run the backend for this
    request, then feed the outcome back via finish_generation."""

    request_id: str
    request: GenerationRequest


@dataclass
class HandleResult:
    outbound: list[tuple[str, Message]] = field(default_factory=list)  # (conn_id, frame)
    jobs: list[GenerationJob] = field(default_factory=list)


class ServerSession:
    """Authoritative state for one session; single-writer semantics (callers
    serialize handler invocations per session)."""

    def __init__(self, session_id: str, backend_config: BackendConfig | None = None):
        self.session_id = session_id
        self.document = SketchDocument.empty(session_id)
        self.next_seq = 1
        self.participants: list[Participant] = []
        self.join_counter = 0
        self.active_generation: Optional[str] = None
        self.backend_config = backend_config or BackendConfig(kind="mock")
        self._conn_of: dict[str, str] = {}

    # --- helpers ---

    @property
    def last_seq(self) -> int:
        return self.next_seq - 1

    def participant_by_id(self, participant_id: str) -> Optional[Participant]:
        for p in self.participants:
            if p.participant_id == participant_id:
                return p
        return None

    def participant_by_conn(self, conn_id: str) -> Optional[Participant]:
        for pid, cid in self._conn_of.items():
            if cid == conn_id:
                return self.participant_by_id(pid)
        return None

    def snapshot(self) -> tuple[bytes, int]:
        return canonical_serialize(self.document), self.last_seq

    def _msg(self, mtype: str, payload: dict) -> Message:
        return Message(type=mtype, session_id=self.session_id, sender_id="server",
                       payload=payload)

    def _broadcast(self, msg: Message, exclude: str | None = None) -> list[tuple[str, Message]]:
        return [(self._conn_of[p.participant_id], msg) for p in self.participants
                if p.participant_id != exclude and p.participant_id in self._conn_of]

    def _reject(self, conn_id: str, op_id: str, reason: str) -> HandleResult:
        return HandleResult(outbound=[(conn_id, self._msg(
            OP_REJECTED, {"op_id": op_id, "reason": reason}))])

    # --- handlers ---

    def handle_message(self, conn_id: str, msg: Message) -> HandleResult:
        if msg.type == JOIN:
            return self.handle_join(conn_id, msg)
        if msg.type == SUBMIT_OP:
            return self.handle_submit_op(conn_id, msg)
        if msg.type == TRIGGER_GENERATION:
            return self.handle_trigger_generation(conn_id, msg)
        if msg.type == LEAVE:
            return self.handle_leave(conn_id)
        return self._reject(conn_id, "", f"ProtocolError: unexpected {msg.type}")

    def _welcome_payload(self, participant: Participant) -> dict:
        snapshot_bytes, last_seq = self.snapshot()
        return {
            "color_index": participant.color_index,
            "last_seq": last_seq,
            "participant_id": participant.participant_id,
            "participants": [p.to_dict() for p in self.participants],
            "snapshot": canonical_loads(snapshot_bytes),
        }

    def handle_join(self, conn_id: str, msg: Message) -> HandleResult:
        participant_id = msg.sender_id
        if not participant_id:
            return self._reject(conn_id, "", "ProtocolError: join without sender_id")
        existing = self.participant_by_id(participant_id)
        if existing is not None:
            if self._conn_of.get(participant_id) == conn_id:
                # resync request from the same connection: fresh welcome only
                return HandleResult(outbound=[
                    (conn_id, self._msg(WELCOME, self._welcome_payload(existing)))])
            return self._reject(conn_id, "", DuplicateParticipantId.__name__)
        if len(self.participants) >= SESSION_CAP:
            return self._reject(conn_id, "", SessionFull.__name__)
        participant = Participant(
            participant_id=participant_id,
            display_name=str(msg.payload.get("display_name", participant_id)),
            color_index=self.join_counter % len(PALETTE),
        )
        self.join_counter += 1
        self.participants.append(participant)
        self._conn_of[participant_id] = conn_id
        out = [(conn_id, self._msg(WELCOME, self._welcome_payload(participant)))]
        presence = self._msg(PRESENCE_UPDATE,
                             {"participants": [p.to_dict() for p in self.participants]})
        out += self._broadcast(presence, exclude=participant_id)
        return HandleResult(outbound=out)

    def handle_submit_op(self, conn_id: str, msg: Message) -> HandleResult:
        sender = self.participant_by_id(msg.sender_id)
        raw_op = msg.payload.get("op", {})
        op_id = raw_op.get("op_id", "") if isinstance(raw_op, dict) else ""
        if sender is None or self._conn_of.get(sender.participant_id) != conn_id:
            return self._reject(conn_id, op_id, NotAParticipant.__name__)
        try:
            op = EditOp.from_dict(raw_op)
        except SpatialPromptError as exc:
            return self._reject(conn_id, op_id, exc.reason)
        if op.kind == OpKind.ADD_STROKE:
            # attribution is server-owned: stroke color always matches author
            op = replace(op, stroke=replace(op.stroke, color_index=sender.color_index))
        op = replace(op, seq=self.next_seq)
        try:
            self.document = apply_op(self.document, op)
        except SpatialPromptError as exc:
            return self._reject(conn_id, op_id, exc.reason)
        self.next_seq += 1
        applied = self._msg(OP_APPLIED, {"op": op.to_dict()})
        return HandleResult(outbound=self._broadcast(applied))

    def handle_trigger_generation(self, conn_id: str, msg: Message) -> HandleResult:
        sender = self.participant_by_id(msg.sender_id)
        if sender is None or self._conn_of.get(sender.participant_id) != conn_id:
            return self._reject(conn_id, "", NotAParticipant.__name__)
        if self.active_generation is not None:
            return self._reject(conn_id, "", GenerationBusy.__name__)
        if not self.document.strokes:
            status = self._msg(GENERATION_STATUS, {
                "failure_reason": EmptySketch.__name__,
                "progress": None, "request_id": "", "state": "failed"})
            return HandleResult(outbound=self._broadcast(status))
        try:
            prompt_data = msg.payload.get("prompt", {})
            prompt = SemanticPrompt(
                text=str(prompt_data.get("text", "")),
                style_tags=tuple(prompt_data.get("style_tags", [])),
                negative_text=prompt_data.get("negative_text"),
            )
            seed = msg.payload.get("seed", 0)
            cs = compile_sketch(self.document)
            request = assemble(cs, prompt, seed)
        except SpatialPromptError as exc:
            status = self._msg(GENERATION_STATUS, {
                "failure_reason": exc.reason, "progress": None,
                "request_id": "", "state": "failed"})
            return HandleResult(outbound=self._broadcast(status))
        self.active_generation = request.request_id
        status = self._msg(GENERATION_STATUS, {
            "failure_reason": None, "progress": 0,
            "request_id": request.request_id, "state": "running"})
        return HandleResult(
            outbound=self._broadcast(status),
            jobs=[GenerationJob(request_id=request.request_id, request=request)],
        )

    def run_generation_job(self, job: GenerationJob) -> GenerationResult:
        """Execute the backend call (blocking; run off the session writer)."""
        return generate(job.request, self.backend_config)

    def finish_generation(self, job: GenerationJob,
                          result: GenerationResult | None,
                          error: Exception | None = None) -> HandleResult:
        """Re-enter the session with a finished generation: broadcast the
        asset (with its validation report) or the failure."""
        self.active_generation = None
        if error is not None or result is None:
            reason = error.reason if isinstance(error, SpatialPromptError) else str(error)
            status = self._msg(GENERATION_STATUS, {
                "failure_reason": reason, "progress": None,
                "request_id": job.request_id, "state": "failed"})
            return HandleResult(outbound=self._broadcast(status))
        obj_bytes = export_mesh_obj(result.mesh)
        obj_b64 = base64.b64encode(obj_bytes).decode("ascii")
        if len(obj_b64) > MAX_ASSET_B64_CHARS:
            status = self._msg(GENERATION_STATUS, {
                "failure_reason": "AssetTooLarge", "progress": None,
                "request_id": job.request_id, "state": "failed"})
            return HandleResult(outbound=self._broadcast(status))
        report = validate(result.mesh, job.request.constraint_set)
        ready = self._msg(ASSET_READY, {
            "obj_base64": obj_b64,
            "report": report.to_dict(),
            "request_id": job.request_id,
        })
        return HandleResult(outbound=self._broadcast(ready))

    def handle_leave(self, conn_id: str) -> HandleResult:
        participant = self.participant_by_conn(conn_id)
        if participant is None:
            return HandleResult()
        self.participants = [p for p in self.participants
                             if p.participant_id != participant.participant_id]
        self._conn_of.pop(participant.participant_id, None)
        presence = self._msg(PRESENCE_UPDATE,
                             {"participants": [p.to_dict() for p in self.participants]})
        return HandleResult(outbound=self._broadcast(presence))


class ClientSession:
    """Client-side reconciliation: authoritative document = snapshot + applied
    ops in server order; own unacknowledged ops form a provisional overlay."""

    def __init__(self, session_id: str, participant_id: str, display_name: str = ""):
        self.session_id = session_id
        self.participant_id = participant_id
        self.display_name = display_name or participant_id
        self.phase = "disconnected"
        self.document = SketchDocument.empty(session_id)
        self.last_seq = 0
        self.color_index: Optional[int] = None
        self.participants: list[Participant] = []
        self.pending: list[EditOp] = []
        self.rejections: list[dict] = []
        self.generation_events: list[Message] = []
        self.last_asset: Optional[dict] = None

    def _frame(self, mtype: str, payload: dict) -> Message:
        return Message(type=mtype, session_id=self.session_id,
                       sender_id=self.participant_id, payload=payload)

    def begin_join(self) -> Message:
        self.phase = "joining"
        return self._frame(JOIN, {"display_name": self.display_name})

    def submit_op(self, op: EditOp) -> Message:
        if self.phase != "synced":
            raise ProtocolError("cannot submit before welcome")
        self.pending.append(op)
        return self._frame(SUBMIT_OP, {"op": op.to_dict()})

    def trigger_generation(self, text: str, seed: int = 0,
                           style_tags: tuple[str, ...] = (),
                           negative_text: str | None = None) -> Message:
        if self.phase != "synced":
            raise ProtocolError("cannot trigger before welcome")
        prompt: dict = {"text": text, "style_tags": list(style_tags)}
        if negative_text is not None:
            prompt["negative_text"] = negative_text
        return self._frame(TRIGGER_GENERATION, {"prompt": prompt, "seed": seed})

    def leave(self) -> Message:
        self.phase = "disconnected"
        return self._frame(LEAVE, {})

    def on_message(self, msg: Message) -> list[Message]:
        """Consume one server frame; returns frames to send back (resyncs)."""
        if msg.type == WELCOME:
            self.document = SketchDocument.from_dict(msg.payload["snapshot"])
            self.last_seq = int(msg.payload["last_seq"])
            self.color_index = int(msg.payload["color_index"])
            self.participants = [Participant(p["participant_id"], p["display_name"],
                                             int(p["color_index"]))
                                 for p in msg.payload["participants"]]
            known = {op.op_id for op in self.document.op_log}
            self.pending = [op for op in self.pending if op.op_id not in known]
            self.phase = "synced"
            return []
        if msg.type == OP_APPLIED:
            op = EditOp.from_dict(msg.payload["op"])
            if op.seq != self.last_seq + 1:
                return self._request_resync()
            try:
                self.document = apply_op(self.document, op)
            except SpatialPromptError:
                return self._request_resync()
            self.last_seq = op.seq
            self.pending = [p for p in self.pending if p.op_id != op.op_id]
            return []
        if msg.type == OP_REJECTED:
            op_id = msg.payload.get("op_id", "")
            self.pending = [p for p in self.pending if p.op_id != op_id]
            self.rejections.append(dict(msg.payload))
            return []
        if msg.type == PRESENCE_UPDATE:
            self.participants = [Participant(p["participant_id"], p["display_name"],
                                             int(p["color_index"]))
                                 for p in msg.payload["participants"]]
            return []
        if msg.type in (GENERATION_STATUS, ASSET_READY):
            self.generation_events.append(msg)
            if msg.type == ASSET_READY:
                self.last_asset = dict(msg.payload)
            return []
        return []

    def _request_resync(self) -> list[Message]:
        self.phase = "joining"
        return [self._frame(JOIN, {"display_name": self.display_name})]

    def digest(self) -> str:
        return document_digest(self.document)

    def overlay_document(self) -> SketchDocument:
        """Authoritative document plus pending ops, best effort (display only)."""
        doc = self.document
        for op in self.pending:
            try:
                doc = apply_op(doc, op)
            except SpatialPromptError:
                continue
        return doc


# --- simulated transport harness ---

@dataclass
class HarnessResult:
    server_digest: str
    client_digests: dict[str, str]
    transcript: tuple[str, ...]
    server_document: SketchDocument
    clients: dict[str, ClientSession]

    @property
    def converged(self) -> bool:
        return all(d == self.server_digest for d in self.client_digests.values())


def run_simulated_session(
    session_id: str,
    client_scripts: dict[str, list[Callable[[ClientSession, random.Random], Optional[Message]]]],
    schedule_seed: int,
    backend_config: BackendConfig | None = None,
) -> HarnessResult:
    """Drive N scripted clients against a server over in-process FIFO queues.

    The scheduler interleaves deliveries and sends with a seeded RNG, so a
    given seed always replays the identical transcript. Generation jobs run
    synchronously at the point the trigger is delivered (the mock backend is
    deterministic), with their broadcasts queued like any other frame.
    """
    rng = random.Random(schedule_seed)
    server = ServerSession(session_id, backend_config=backend_config)
    clients = {cid: ClientSession(session_id, cid) for cid in client_scripts}
    to_server: dict[str, list[Message]] = {cid: [] for cid in clients}
    to_client: dict[str, list[Message]] = {cid: [] for cid in clients}
    scripts = {cid: list(script) for cid, script in client_scripts.items()}
    transcript: list[str] = []

    for cid in sorted(clients):
        to_server[cid].append(clients[cid].begin_join())
        transcript.append(f"{cid} join")

    def deliver_to_server(cid: str) -> None:
        msg = to_server[cid].pop(0)
        result = server.handle_message(cid, msg)
        for conn_id, frame in result.outbound:
            to_client[conn_id].append(frame)
        for job in result.jobs:
            try:
                outcome = server.run_generation_job(job)
                fin = server.finish_generation(job, outcome)
            except Exception as exc:
                fin = server.finish_generation(job, None, error=exc)
            for conn_id, frame in fin.outbound:
                to_client[conn_id].append(frame)
        transcript.append(f"server<-{cid} {msg.type}")

    def deliver_to_client(cid: str) -> None:
        msg = to_client[cid].pop(0)
        replies = clients[cid].on_message(msg)
        for frame in replies:
            to_server[cid].append(frame)
        transcript.append(f"{cid}<-server {msg.type}")

    def send_next_action(cid: str) -> None:
        action = scripts[cid].pop(0)
        frame = action(clients[cid], rng)
        if frame is not None:
            to_server[cid].append(frame)
            transcript.append(f"{cid} sends {frame.type}")
        else:
            transcript.append(f"{cid} skips")

    while True:
        events: list[tuple[str, str]] = []
        for cid in sorted(clients):
            if to_server[cid]:
                events.append(("c2s", cid))
            if to_client[cid]:
                events.append(("s2c", cid))
            if scripts[cid] and clients[cid].phase == "synced":
                events.append(("act", cid))
        if not events:
            break
        kind, cid = events[rng.randrange(len(events))]
        if kind == "c2s":
            deliver_to_server(cid)
        elif kind == "s2c":
            deliver_to_client(cid)
        else:
            send_next_action(cid)

    return HarnessResult(
        server_digest=document_digest(server.document),
        client_digests={cid: c.digest() for cid, c in clients.items()},
        transcript=tuple(transcript),
        server_document=server.document,
        clients=clients,
    )
