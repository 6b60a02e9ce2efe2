/**
 * Scripted two-client studio test against a live engine server (mock
 * backend): concurrent drawing with palette attribution, jointly visible
 * generation with an all-pass report, and export digest cross-checks against
 * the engine's own digest command.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import WebSocket from "ws";

import { StudioClient } from "../src/client.js";
import { documentDigest, Stroke } from "../src/document.js";
import { downsamplePath } from "../src/geometry.js";
import { parseObj } from "../src/obj.js";
import { colorOf, decodeFrame, encodeFrame, Envelope } from "../src/protocol.js";

const HOST = "127.0.0.1";
const PORT = 8741;
const BASE = `http://${HOST}:${PORT}`;
const REPO_ROOT = new URL("../..", import.meta.url).pathname;

let server: ChildProcess;

async function waitForServer(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/healthz`);
      if (res.ok) return;
    } catch {
      await new Promise((r) => setTimeout(r, 250));
    }
  }
  throw new Error("engine server did not come up");
}

class WireClient {
  readonly client: StudioClient;
  private ws!: WebSocket;
  private inbox: Envelope[] = [];
  private waiters: ((msg: Envelope) => boolean)[] = [];

  constructor(sessionId: string, participantId: string) {
    this.client = new StudioClient(sessionId, participantId, participantId);
  }

  async connect(): Promise<void> {
    this.ws = new WebSocket(`ws://${HOST}:${PORT}/session/${this.client.sessionId}`,
                            { maxPayload: 32 * 1024 * 1024 });
    await new Promise<void>((resolve, reject) => {
      this.ws.once("open", () => resolve());
      this.ws.once("error", reject);
    });
    this.ws.on("message", (data) => {
      const msg = decodeFrame(data.toString());
      const replies = this.client.onMessage(msg);
      for (const reply of replies) this.ws.send(encodeFrame(reply));
      this.inbox.push(msg);
    });
  }

  send(frame: Envelope): void {
    this.ws.send(encodeFrame(frame));
  }

  async waitFor(pred: (msg: Envelope) => boolean, timeoutMs = 30000): Promise<Envelope> {
    const start = Date.now();
    let cursor = 0;
    while (Date.now() - start < timeoutMs) {
      while (cursor < this.inbox.length) {
        const msg = this.inbox[cursor++];
        if (pred(msg)) return msg;
      }
      await new Promise((r) => setTimeout(r, 25));
    }
    throw new Error("timed out waiting for a frame");
  }

  close(): void {
    this.ws.close();
  }
}

function strokeOnPlane(author: string, id: string, y: number, shift: number): Stroke {
  // a pointer path on the construction plane, downsampled like the UI does
  const raw: [number, number, number][] = [];
  for (let k = 0; k <= 60; k++) {
    raw.push([shift + k * 0.01, y, 0.2 * Math.sin(k / 9)]);
  }
  const points = downsamplePath(raw)!;
  return {
    stroke_id: id,
    author_id: author,
    role: "contour",
    points,
    created_at: 1700000000000,
    color_index: 0, // server overwrites with the author's slot
  };
}

describe("studio protocol end-to-end", () => {
  beforeAll(async () => {
    server = spawn("python3", ["-m", "spatialprompt.cli", "serve",
                               "--listen", `${HOST}:${PORT}`, "--backend", "mock"],
                   { cwd: REPO_ROOT, stdio: "ignore" });
    await waitForServer();
  }, 45000);

  afterAll(() => {
    server?.kill();
  });

  it("two clients draw, co-generate, and export digest-identically", async () => {
    const alice = new WireClient("studio-e2e", "alice");
    const bob = new WireClient("studio-e2e", "bob");
    await alice.connect();
    await bob.connect();

    alice.send(alice.client.beginJoin());
    await alice.waitFor((m) => m.type === "welcome");
    bob.send(bob.client.beginJoin());
    await bob.waitFor((m) => m.type === "welcome");
    expect(alice.client.colorIndex).toBe(0);
    expect(bob.client.colorIndex).toBe(1);

    // concurrent drawing: both submit before either sees the other's stroke
    const strokeA = strokeOnPlane("alice", "alice-0001", 0.2, 0.0);
    const strokeB = strokeOnPlane("bob", "bob-0001", 0.8, 0.1);
    alice.send(alice.client.submitOp({
      op_id: "alice-0001-add", author_id: "alice", kind: "add_stroke", stroke: strokeA,
    }));
    bob.send(bob.client.submitOp({
      op_id: "bob-0001-add", author_id: "bob", kind: "add_stroke", stroke: strokeB,
    }));

    await alice.waitFor((m) => m.type === "op_applied" && m.payload.op.seq === 2);
    await bob.waitFor((m) => m.type === "op_applied" && m.payload.op.seq === 2);

    // both replicas hold both strokes, tinted by their authors' palette slots
    for (const c of [alice.client, bob.client]) {
      expect(c.document.strokes.size).toBe(2);
      expect(c.document.strokes.get("alice-0001")!.color_index).toBe(0);
      expect(c.document.strokes.get("bob-0001")!.color_index).toBe(1);
      expect(colorOf(c.document.strokes.get("bob-0001")!.color_index)).toBe("#3cb44b");
      expect(c.pending).toHaveLength(0);
    }
    const digestA = await documentDigest(alice.client.document);
    const digestB = await documentDigest(bob.client.document);
    expect(digestA).toBe(digestB);

    // one participant triggers generation; both receive the asset + report
    bob.send(bob.client.triggerGeneration("a ribbon sculpture", 7));
    const readyA = await alice.waitFor((m) => m.type === "asset_ready");
    const readyB = await bob.waitFor((m) => m.type === "asset_ready");
    expect(readyA.payload.request_id).toBe(readyB.payload.request_id);
    expect(readyA.payload.report.overall_pass).toBe(true);
    expect(readyA.payload.obj_base64).toBe(readyB.payload.obj_base64);
    const mesh = parseObj(Buffer.from(readyA.payload.obj_base64, "base64").toString());
    expect(mesh.triangles.length).toBeGreaterThan(0);

    // the client mirror digest equals the server digest
    const info = await (await fetch(`${BASE}/sessions/studio-e2e`)).json();
    expect(digestA).toBe(info.digest);

    // exported sketch.json bytes digest-match the engine's own digest command
    const exported = await (await fetch(`${BASE}/sessions/studio-e2e/sketch.json`)).text();
    const dir = mkdtempSync(join(tmpdir(), "studio-e2e-"));
    try {
      const path = join(dir, "exported.sketch.json");
      writeFileSync(path, exported);
      const cli = spawnSync("python3", ["-m", "spatialprompt.cli", "digest", "--in", path],
                            { cwd: REPO_ROOT, encoding: "utf-8" });
      expect(cli.status).toBe(0);
      expect(cli.stdout.trim()).toBe(digestA);
      const replayed = spawnSync("python3", ["-m", "spatialprompt.cli", "replay", "--in", path],
                                 { cwd: REPO_ROOT, encoding: "utf-8" });
      expect(replayed.status).toBe(0);
    } finally {
      rmSync(dir, { recursive: true, force: true });
    }

    alice.close();
    bob.close();
  }, 60000);
});
