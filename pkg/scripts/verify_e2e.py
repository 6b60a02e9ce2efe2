#!/usr/bin/env python3
"""End-to-end drive of the built artifact over real processes and sockets.

Starts the service with the installed CLI, exercises the REST surface and a
two-client WebSocket session (draw, regenerate, download, digest cross-check),
then runs the batch CLI pipeline in a scratch directory. Exits non-zero on
the first failure.
"""

import asyncio
import base64
import json
import random
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import requests
import websockets

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import chunky_sketch  # noqa: E402

from spatialprompt.meshio import load_mesh_obj  # noqa: E402
from spatialprompt.session import Message  # noqa: E402
from spatialprompt.sketch import (  # noqa: E402
    canonical_serialize,
    document_digest,
    parse as parse_document,
)

HOST = "127.0.0.1"
PORT = 8123
BASE = f"http://{HOST}:{PORT}"


def wait_for_server(proc, timeout=20.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        if proc.poll() is not None:
            raise SystemExit(f"server exited early with {proc.returncode}")
        try:
            if requests.get(f"{BASE}/healthz", timeout=1).status_code == 200:
                return
        except requests.ConnectionError:
            time.sleep(0.2)
    raise SystemExit("server did not come up in time")


def check(name, ok, detail=""):
    print(f"[{'ok' if ok else 'FAIL'}] {name}" + (f" {detail}" if detail else ""))
    if not ok:
        raise SystemExit(f"verification failed at: {name}")


async def drive_session():
    uri = f"ws://{HOST}:{PORT}/session/verify-room"

    async def recv(ws):
        return Message.from_json(await asyncio.wait_for(ws.recv(), timeout=30))

    async def recv_until(ws, mtype):
        for _ in range(100):
            msg = await recv(ws)
            if msg.type == mtype:
                return msg
        raise SystemExit(f"never received {mtype}")

    async with websockets.connect(uri, max_size=20 * 1024 * 1024) as wa, \
            websockets.connect(uri, max_size=20 * 1024 * 1024) as wb:
        await wa.send(Message("join", "verify-room", "alice",
                              {"display_name": "Alice"}).to_json())
        welcome_a = await recv(wa)
        check("alice welcome color 0", welcome_a.payload["color_index"] == 0)

        await wb.send(Message("join", "verify-room", "bob",
                              {"display_name": "Bob"}).to_json())
        welcome_b = await recv(wb)
        check("bob welcome color 1", welcome_b.payload["color_index"] == 1)
        presence = await recv(wa)
        check("alice sees presence", presence.type == "presence_update")

        rng = random.Random(42)
        doc = chunky_sketch(rng, doc_id="verify-room")
        strokes = doc.strokes_sorted()[:6]
        senders = [(wa, "alice"), (wb, "bob")]
        for i, stroke in enumerate(strokes):
            ws, who = senders[i % 2]
            op = {
                "author_id": who, "kind": "add_stroke", "op_id": f"e2e-{i:03d}",
                "stroke": {**stroke.to_dict(), "author_id": who},
            }
            await ws.send(Message("submit_op", "verify-room", who,
                                  {"op": op}).to_json())
        applied_a = [await recv_until(wa, "op_applied") for _ in range(len(strokes))]
        applied_b = [await recv_until(wb, "op_applied") for _ in range(len(strokes))]
        seqs = [m.payload["op"]["seq"] for m in applied_a]
        check("dense seq numbers", seqs == list(range(1, len(strokes) + 1)), str(seqs))
        colors = {m.payload["op"]["stroke"]["stroke_id"]:
                  m.payload["op"]["stroke"]["color_index"] for m in applied_b}
        expected = {s.stroke_id: 0 if i % 2 == 0 else 1
                    for i, s in enumerate(strokes)}
        check("palette attribution", colors == expected)

        await wb.send(Message("trigger_generation", "verify-room", "bob",
                              {"prompt": {"text": "a study structure"},
                               "seed": 9}).to_json())
        status = await recv_until(wa, "generation_status")
        check("generation running", status.payload["state"] == "running")
        ready_a = await recv_until(wa, "asset_ready")
        ready_b = await recv_until(wb, "asset_ready")
        check("both got the same asset",
              ready_a.payload["request_id"] == ready_b.payload["request_id"])
        check("report overall_pass", ready_a.payload["report"]["overall_pass"] is True)
        mesh = load_mesh_obj(base64.b64decode(ready_a.payload["obj_base64"]))
        check("asset decodes", mesh.triangle_count > 0,
              f"{mesh.vertex_count} verts / {mesh.triangle_count} tris")

        info = requests.get(f"{BASE}/sessions/verify-room").json()
        download = requests.get(f"{BASE}/sessions/verify-room/sketch.json").content
        doc2 = parse_document(download)
        check("download digest matches session info",
              document_digest(doc2) == info["digest"])
        return download


def main():
    proc = subprocess.Popen(
        [sys.executable, "-m", "spatialprompt.cli", "serve",
         "--listen", f"{HOST}:{PORT}", "--backend", "mock"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        wait_for_server(proc)
        check("healthz", requests.get(f"{BASE}/healthz").json()["status"] == "ok")

        rng = random.Random(7)
        sketch = chunky_sketch(rng).to_dict()
        compiled = requests.post(f"{BASE}/compile",
                                 json={"sketch": sketch, "resample_spacing": 0.05})
        check("REST compile", compiled.status_code == 200)
        generated = requests.post(f"{BASE}/generate", json={
            "sketch": sketch, "prompt": "a frame", "seed": 3,
            "resample_spacing": 0.05})
        check("REST generate overall_pass",
              generated.json()["report"]["overall_pass"] is True)

        download = asyncio.run(drive_session())

        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            sketch_path = tmp / "in.sketch.json"
            sketch_path.write_bytes(download)

            def cli(*args):
                return subprocess.run(
                    [sys.executable, "-m", "spatialprompt.cli", *args],
                    capture_output=True, text=True, timeout=120)

            r = cli("digest", "--in", str(sketch_path))
            check("CLI digest", r.returncode == 0, r.stdout.strip()[:16])
            server_info = requests.get(f"{BASE}/sessions/verify-room").json()
            check("CLI digest == server digest",
                  r.stdout.strip() == server_info["digest"])
            r = cli("replay", "--in", str(sketch_path))
            check("CLI replay", r.returncode == 0)
            r = cli("compile", "--in", str(sketch_path),
                    "--out", str(tmp / "c.json"), "--resample-spacing", "0.05")
            check("CLI compile", r.returncode == 0)
            r = cli("generate", "--in", str(sketch_path), "--prompt", "a frame",
                    "--backend", "mock", "--out", str(tmp / "a.obj"),
                    "--report", str(tmp / "r.json"), "--resample-spacing", "0.05")
            check("CLI generate exit 0", r.returncode == 0, r.stderr.strip()[-60:])
            r = cli("validate", "--mesh", str(tmp / "a.obj"),
                    "--constraints", str(tmp / "c.json"))
            check("CLI validate exit 0", r.returncode == 0)
        print("E2E VERIFICATION PASSED")
    finally:
        proc.terminate()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()


if __name__ == "__main__":
    main()
