"""FastAPI service wrapping the engine: REST endpoints for the batch
pipeline (compile / generate / validate / digest) and the WebSocket session
protocol at /session/{session_id}.

All state mutations for one session pass through that session's asyncio lock
(one logical writer); generation runs in a worker thread and re-enters the
session through the same lock.
"""

from __future__ import annotations

import asyncio
import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from pydantic import BaseModel, Field

from . import __version__
from .backend import BackendConfig, generate as run_generation
from .compiler import compile as compile_sketch, parse_constraints
from .errors import BackendError, ConfigurationError, ProtocolError, SpatialPromptError
from .jsoncanon import canonical_dumps, canonical_loads
from .meshio import export_mesh_obj, load_mesh_obj
from .prompting import SemanticPrompt, assemble, canonical_request_bytes
from .session import Message, ServerSession
from .sketch import SketchDocument, document_digest, replay
from .validation import validate as validate_mesh


class CompileRequest(BaseModel):
    sketch: dict
    epsilon: Optional[float] = None
    resample_spacing: float = 0.01


class CompileResponse(BaseModel):
    constraints: dict
    source_digest: str


class GenerateRequest(BaseModel):
    sketch: dict
    prompt: str
    style_tags: list[str] = Field(default_factory=list)
    negative_text: Optional[str] = None
    seed: int = 0
    resample_spacing: float = 0.01
    epsilon: Optional[float] = None


class GenerateResponse(BaseModel):
    request: dict
    asset_obj: str
    report: dict
    metadata: dict


class ValidateRequest(BaseModel):
    mesh_obj: str
    constraints: dict


class ValidateResponse(BaseModel):
    report: dict


class DigestRequest(BaseModel):
    sketch: dict


class DigestResponse(BaseModel):
    digest: str
    revision: int
    replay_consistent: bool


class SessionInfo(BaseModel):
    session_id: str
    digest: str
    last_seq: int
    revision: int
    participants: list[dict]


def _parse_sketch(data: dict) -> SketchDocument:
    try:
        return SketchDocument.from_dict(data)
    except SpatialPromptError as exc:
        raise HTTPException(status_code=422,
                            detail={"error": exc.reason, "message": str(exc)})


class SessionHub:
    """In-memory session registry plus live connection map."""

    def __init__(self, backend_config: BackendConfig):
        self.backend_config = backend_config
        self.sessions: dict[str, ServerSession] = {}
        self.locks: dict[str, asyncio.Lock] = {}
        self.connections: dict[str, WebSocket] = {}

    def get_or_create(self, session_id: str) -> ServerSession:
        if session_id not in self.sessions:
            self.sessions[session_id] = ServerSession(
                session_id, backend_config=self.backend_config)
            self.locks[session_id] = asyncio.Lock()
        return self.sessions[session_id]

    def lock(self, session_id: str) -> asyncio.Lock:
        return self.locks.setdefault(session_id, asyncio.Lock())

    async def dispatch(self, outbound) -> None:
        for conn_id, message in outbound:
            ws = self.connections.get(conn_id)
            if ws is None:
                continue
            try:
                await ws.send_text(message.to_json())
            except Exception:
                self.connections.pop(conn_id, None)


def create_app(backend_config: BackendConfig | None = None,
               static_dir: str | None = None) -> FastAPI:
    config = backend_config or BackendConfig(kind="mock")
    app = FastAPI(title="spatialprompt", version=__version__)
    hub = SessionHub(config)
    app.state.hub = hub

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__, "backend": config.kind}

    @app.post("/compile", response_model=CompileResponse)
    def compile_endpoint(body: CompileRequest):
        doc = _parse_sketch(body.sketch)
        try:
            cs = compile_sketch(doc, epsilon=body.epsilon,
                                resample_spacing=body.resample_spacing)
        except SpatialPromptError as exc:
            raise HTTPException(status_code=422,
                                detail={"error": exc.reason, "message": str(exc)})
        return CompileResponse(constraints=cs.to_dict(), source_digest=cs.source_digest)

    @app.post("/generate", response_model=GenerateResponse)
    def generate_endpoint(body: GenerateRequest):
        doc = _parse_sketch(body.sketch)
        try:
            cs = compile_sketch(doc, epsilon=body.epsilon,
                                resample_spacing=body.resample_spacing)
            prompt = SemanticPrompt(text=body.prompt,
                                    style_tags=tuple(body.style_tags),
                                    negative_text=body.negative_text)
            request = assemble(cs, prompt, body.seed)
        except SpatialPromptError as exc:
            raise HTTPException(status_code=422,
                                detail={"error": exc.reason, "message": str(exc)})
        try:
            result = run_generation(request, config)
        except (BackendError, ConfigurationError) as exc:
            raise HTTPException(status_code=502,
                                detail={"error": exc.reason, "message": str(exc)})
        report = validate_mesh(result.mesh, cs)
        return GenerateResponse(
            request=canonical_loads(canonical_request_bytes(request)),
            asset_obj=export_mesh_obj(result.mesh).decode("utf-8"),
            report=report.to_dict(),
            metadata=result.metadata,
        )

    @app.post("/validate", response_model=ValidateResponse)
    def validate_endpoint(body: ValidateRequest):
        try:
            cs = parse_constraints(canonical_dumps(body.constraints))
            mesh = load_mesh_obj(body.mesh_obj.encode("utf-8"))
            report = validate_mesh(mesh, cs)
        except SpatialPromptError as exc:
            raise HTTPException(status_code=422,
                                detail={"error": exc.reason, "message": str(exc)})
        return ValidateResponse(report=report.to_dict())

    @app.post("/digest", response_model=DigestResponse)
    def digest_endpoint(body: DigestRequest):
        doc = _parse_sketch(body.sketch)
        digest = document_digest(doc)
        try:
            consistent = document_digest(replay(doc)) == digest
        except SpatialPromptError:
            consistent = False
        return DigestResponse(digest=digest, revision=doc.revision,
                              replay_consistent=consistent)

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str):
        session = hub.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail={"error": "UnknownSession"})
        snapshot, last_seq = session.snapshot()
        return SessionInfo(
            session_id=session_id,
            digest=document_digest(session.document),
            last_seq=last_seq,
            revision=session.document.revision,
            participants=[p.to_dict() for p in session.participants],
        )

    @app.get("/sessions/{session_id}/sketch.json")
    def session_sketch(session_id: str):
        session = hub.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail={"error": "UnknownSession"})
        snapshot, _ = session.snapshot()
        return Response(content=snapshot, media_type="application/json",
                        headers={"Content-Disposition":
                                 f'attachment; filename="{session_id}.sketch.json"'})

    async def _run_job(session: ServerSession, session_id: str, job) -> None:
        try:
            outcome = await asyncio.to_thread(session.run_generation_job, job)
            error = None
        except Exception as exc:
            outcome, error = None, exc
        async with hub.lock(session_id):
            result = session.finish_generation(job, outcome, error)
        await hub.dispatch(result.outbound)

    @app.websocket("/session/{session_id}")
    async def session_ws(ws: WebSocket, session_id: str):
        await ws.accept()
        conn_id = uuid.uuid4().hex
        hub.connections[conn_id] = ws
        try:
            while True:
                frame = await ws.receive_text()
                try:
                    msg = Message.from_json(frame)
                except ProtocolError as exc:
                    err = Message(type="op_rejected", session_id=session_id,
                                  sender_id="server",
                                  payload={"op_id": "", "reason": f"ProtocolError: {exc}"})
                    await ws.send_text(err.to_json())
                    continue
                async with hub.lock(session_id):
                    session = hub.get_or_create(session_id)
                    result = session.handle_message(conn_id, msg)
                await hub.dispatch(result.outbound)
                for job in result.jobs:
                    asyncio.create_task(_run_job(session, session_id, job))
        except WebSocketDisconnect:
            pass
        finally:
            hub.connections.pop(conn_id, None)
            session = hub.sessions.get(session_id)
            if session is not None:
                async with hub.lock(session_id):
                    result = session.handle_leave(conn_id)
                await hub.dispatch(result.outbound)

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")

    return app
