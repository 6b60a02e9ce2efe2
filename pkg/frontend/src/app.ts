/** Browser studio: wires the canvas viewport, the session WebSocket, and the
 * generate/report panels together. Left-drag draws on the construction
 * plane; right-drag orbits; wheel zooms; shift+drag pans. */

import { StudioClient } from "./client.js";
import { Stroke, Vec3, documentDigest } from "./document.js";
import {
  Camera,
  MIN_POINT_SPACING,
  Plane,
  add,
  cameraBasis,
  defaultCamera,
  downsamplePath,
  intersectPlane,
  scale,
  screenRay,
  sub,
} from "./geometry.js";
import { MeshData, parseObj } from "./obj.js";
import { colorOf, decodeFrame, encodeFrame } from "./protocol.js";
import { renderScene } from "./renderer.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

type PlaneMode = "horizontal" | "vertical";

class StudioApp {
  private canvas = $<HTMLCanvasElement>("viewport");
  private ctx = this.canvas.getContext("2d")!;
  private ws: WebSocket | null = null;
  private client: StudioClient | null = null;
  private camera: Camera = defaultCamera();
  private planeMode: PlaneMode = "horizontal";
  private planeOffset = 0.0;
  private activePath: Vec3[] | null = null;
  private dragMode: "none" | "draw" | "orbit" | "pan" = "none";
  private lastPointer: [number, number] = [0, 0];
  private mesh: MeshData | null = null;
  private strokeCounter = 0;

  constructor() {
    this.bindUi();
    this.resize();
    window.addEventListener("resize", () => this.resize());
    const loop = () => {
      this.draw();
      requestAnimationFrame(loop);
    };
    loop();
  }

  private plane(): Plane {
    return this.planeMode === "horizontal"
      ? { point: [0, this.planeOffset, 0], normal: [0, 1, 0] }
      : { point: [0, 0.75, this.planeOffset], normal: [0, 0, 1] };
  }

  private bindUi(): void {
    $("join-btn").addEventListener("click", () => this.connect());
    $("leave-btn").addEventListener("click", () => this.disconnect());
    $("generate-btn").addEventListener("click", () => this.generate());
    $("export-sketch").addEventListener("click", () => this.exportSketch());
    $("export-asset").addEventListener("click", () => this.exportAsset());
    $("export-report").addEventListener("click", () => this.exportReport());
    const planeSlider = $<HTMLInputElement>("plane-offset");
    planeSlider.addEventListener("input", () => {
      this.planeOffset = parseFloat(planeSlider.value);
      $("plane-offset-label").textContent = `${this.planeOffset.toFixed(2)} m`;
    });
    $<HTMLSelectElement>("plane-mode").addEventListener("change", (ev) => {
      this.planeMode = (ev.target as HTMLSelectElement).value as PlaneMode;
    });
    const prompt = $<HTMLInputElement>("prompt");
    const refreshGenerate = () => {
      ($("generate-btn") as HTMLButtonElement).disabled =
        !prompt.value.trim() || this.client?.phase !== "synced";
    };
    prompt.addEventListener("input", refreshGenerate);
    setInterval(refreshGenerate, 500);

    this.canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
    this.canvas.addEventListener("pointerdown", (ev) => this.pointerDown(ev));
    this.canvas.addEventListener("pointermove", (ev) => this.pointerMove(ev));
    this.canvas.addEventListener("pointerup", (ev) => this.pointerUp(ev));
    this.canvas.addEventListener("pointerleave", (ev) => this.pointerUp(ev));
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.camera.dist = Math.min(12, Math.max(0.4, this.camera.dist * (ev.deltaY > 0 ? 1.1 : 0.9)));
    }, { passive: false });
  }

  private resize(): void {
    const rect = this.canvas.parentElement!.getBoundingClientRect();
    this.canvas.width = rect.width;
    this.canvas.height = rect.height;
  }

  // --- connection ---

  private connect(): void {
    const sessionId = $<HTMLInputElement>("session-id").value.trim() || "studio";
    const name = $<HTMLInputElement>("display-name").value.trim() || "guest";
    const participantId = `${name}-${Math.random().toString(36).slice(2, 8)}`;
    this.disconnect();
    const client = new StudioClient(sessionId, participantId, name);
    const proto = location.protocol === "https:" ? "wss" : "ws";
    const ws = new WebSocket(`${proto}://${location.host}/session/${encodeURIComponent(sessionId)}`);
    this.ws = ws;
    this.client = client;
    this.setStatus("connecting...");
    ws.onopen = () => {
      ws.send(encodeFrame(client.beginJoin()));
    };
    ws.onmessage = (ev) => {
      const msg = decodeFrame(String(ev.data));
      const replies = client.onMessage(msg);
      for (const reply of replies) ws.send(encodeFrame(reply));
      this.afterMessage(msg);
    };
    ws.onclose = () => {
      this.setStatus("disconnected");
      this.client = null;
      this.ws = null;
      this.refreshPresence();
    };
    ws.onerror = () => this.setStatus("connection error");
  }

  private disconnect(): void {
    if (this.ws && this.client && this.client.phase === "synced") {
      try {
        this.ws.send(encodeFrame(this.client.leave()));
      } catch {
        // socket already closing
      }
    }
    this.ws?.close();
    this.ws = null;
    this.client = null;
    this.mesh = null;
  }

  private afterMessage(msg: { type: string; payload: any }): void {
    const client = this.client;
    if (!client) return;
    switch (msg.type) {
      case "welcome":
        this.setStatus(`joined as ${client.displayName} ` +
          `(color ${client.colorIndex})`);
        this.refreshPresence();
        this.refreshDigest();
        break;
      case "presence_update":
        this.refreshPresence();
        break;
      case "op_applied":
        this.refreshDigest();
        break;
      case "op_rejected":
        this.toast(`edit rejected: ${msg.payload.reason}`);
        break;
      case "generation_status": {
        const p = msg.payload;
        this.setBanner(p.state === "failed"
          ? `generation failed: ${p.failure_reason}`
          : `generation ${p.state}` + (p.progress != null ? ` (${p.progress}%)` : ""));
        break;
      }
      case "asset_ready": {
        this.setBanner("generation succeeded");
        const text = atob(msg.payload.obj_base64);
        this.mesh = parseObj(text);
        this.showReport(msg.payload.report);
        break;
      }
    }
  }

  // --- pointer interaction ---

  private pickOnPlane(ev: PointerEvent): Vec3 | null {
    const rect = this.canvas.getBoundingClientRect();
    const basis = cameraBasis(this.camera);
    const ray = screenRay(this.camera, basis, ev.clientX - rect.left, ev.clientY - rect.top,
                          this.canvas.width, this.canvas.height);
    return intersectPlane(ray, this.plane());
  }

  private pointerDown(ev: PointerEvent): void {
    this.canvas.setPointerCapture(ev.pointerId);
    this.lastPointer = [ev.clientX, ev.clientY];
    if (ev.button === 2) {
      this.dragMode = "orbit";
      return;
    }
    if (ev.button === 1 || ev.shiftKey) {
      this.dragMode = "pan";
      return;
    }
    if (this.client?.phase !== "synced") return;
    const hit = this.pickOnPlane(ev);
    if (!hit) return;
    this.dragMode = "draw";
    this.activePath = [hit];
  }

  private pointerMove(ev: PointerEvent): void {
    const [lx, ly] = this.lastPointer;
    const dx = ev.clientX - lx;
    const dy = ev.clientY - ly;
    this.lastPointer = [ev.clientX, ev.clientY];
    if (this.dragMode === "orbit") {
      this.camera.yaw -= dx * 0.008;
      this.camera.pitch = Math.min(1.45, Math.max(-1.45, this.camera.pitch + dy * 0.008));
      return;
    }
    if (this.dragMode === "pan") {
      const basis = cameraBasis(this.camera);
      const step = this.camera.dist * 0.0016;
      this.camera.target = add(this.camera.target,
        add(scale(basis.right, -dx * step), scale(basis.up, dy * step)));
      return;
    }
    if (this.dragMode === "draw" && this.activePath) {
      const hit = this.pickOnPlane(ev);
      if (hit) this.activePath.push(hit);
    }
  }

  private pointerUp(ev: PointerEvent): void {
    if (this.dragMode === "draw" && this.activePath) {
      this.finishStroke(this.activePath);
    }
    this.activePath = null;
    this.dragMode = "none";
  }

  private finishStroke(path: Vec3[]): void {
    const client = this.client;
    if (!client || client.phase !== "synced" || !this.ws) return;
    const points = downsamplePath(path, MIN_POINT_SPACING);
    if (!points) return; // fewer than 2 distinct points: discard client-side
    this.strokeCounter += 1;
    const stroke: Stroke = {
      stroke_id: `${client.participantId}-${this.strokeCounter.toString().padStart(4, "0")}`,
      author_id: client.participantId,
      role: ($<HTMLSelectElement>("role").value as Stroke["role"]),
      points,
      created_at: Date.now(),
      color_index: client.colorIndex ?? 0,
    };
    const op = {
      op_id: `${stroke.stroke_id}-add`,
      author_id: client.participantId,
      kind: "add_stroke" as const,
      stroke,
    };
    this.ws.send(encodeFrame(client.submitOp(op)));
  }

  // --- generation / export ---

  private generate(): void {
    const client = this.client;
    if (!client || client.phase !== "synced" || !this.ws) return;
    const text = $<HTMLInputElement>("prompt").value.trim();
    if (!text) return;
    const seed = parseInt($<HTMLInputElement>("seed").value, 10) || 0;
    this.ws.send(encodeFrame(client.triggerGeneration(text, seed)));
    this.setBanner("generation requested...");
  }

  private exportSketch(): void {
    const client = this.client;
    if (!client) return this.toast("join a session first");
    // the server download is the canonical bytes; byte-identical to the digest source
    window.open(`/sessions/${encodeURIComponent(client.sessionId)}/sketch.json`, "_blank");
  }

  private download(name: string, text: string, type: string): void {
    const blob = new Blob([text], { type });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = name;
    a.click();
    URL.revokeObjectURL(a.href);
  }

  private exportAsset(): void {
    const asset = this.client?.lastAsset;
    if (!asset) return this.toast("no generated asset yet");
    this.download("asset.obj", atob(asset.obj_base64), "text/plain");
  }

  private exportReport(): void {
    const asset = this.client?.lastAsset;
    if (!asset) return this.toast("no report yet");
    this.download("report.json", JSON.stringify(asset.report, null, 2), "application/json");
  }

  // --- panels ---

  private setStatus(text: string): void {
    $("status").textContent = text;
  }

  private setBanner(text: string): void {
    $("banner").textContent = text;
  }

  private toast(text: string): void {
    const el = $("toast");
    el.textContent = text;
    el.classList.add("visible");
    setTimeout(() => el.classList.remove("visible"), 2600);
  }

  private refreshPresence(): void {
    const list = $("participants");
    list.innerHTML = "";
    for (const p of this.client?.participants ?? []) {
      const li = document.createElement("li");
      const swatch = document.createElement("span");
      swatch.className = "swatch";
      swatch.style.background = colorOf(p.color_index);
      li.appendChild(swatch);
      li.appendChild(document.createTextNode(p.display_name));
      list.appendChild(li);
    }
  }

  private async refreshDigest(): Promise<void> {
    const client = this.client;
    if (!client) return;
    const digest = await documentDigest(client.document);
    $("digest").textContent = `rev ${client.document.revision} · ${digest.slice(0, 12)}`;
  }

  private showReport(report: any): void {
    const panel = $("report");
    panel.innerHTML = "";
    const headline = document.createElement("div");
    headline.className = report.overall_pass ? "report-pass" : "report-fail";
    headline.textContent =
      `${report.overall_pass ? "PASS" : "FAIL"} · score ${(report.score * 100).toFixed(0)}%`;
    panel.appendChild(headline);
    for (const check of report.checks) {
      const row = document.createElement("div");
      row.className = "report-row " + (check.pass ? "ok" : "bad");
      row.textContent =
        `${check.pass ? "✓" : "✗"} ${check.name} [${check.kind}] ` +
        `${Number(check.measured).toPrecision(3)} / tol ${Number(check.tolerance).toPrecision(3)}`;
      panel.appendChild(row);
    }
  }

  private draw(): void {
    const client = this.client;
    const doc = client ? client.document : null;
    const pendingStrokes: Stroke[] = [];
    if (client) {
      for (const op of client.pending) {
        if (op.kind === "add_stroke" && op.stroke) pendingStrokes.push(op.stroke);
      }
    }
    renderScene(this.ctx, {
      camera: this.camera,
      document: doc ?? { doc_id: "", schema_version: 1, calibration_scale: 1,
                         strokes: new Map(), revision: 0, op_log: [] },
      pendingStrokes,
      activePath: this.activePath,
      activeColor: colorOf(client?.colorIndex ?? 0),
      plane: this.plane(),
      planeVisible: true,
      mesh: this.mesh,
      meshVisible: true,
    }, this.canvas.width, this.canvas.height);
  }
}

new StudioApp();
