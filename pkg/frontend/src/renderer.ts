/** Canvas 2D painter: construction plane, strokes tinted by author color,
 * provisional overlay, and the generated mesh as a wireframe overlay. */

import { SketchDocument, Stroke, Vec3 } from "./document.js";
import { Camera, CameraBasis, Plane, cameraBasis, project } from "./geometry.js";
import { MeshData } from "./obj.js";
import { colorOf } from "./protocol.js";

export interface SceneState {
  camera: Camera;
  document: SketchDocument;
  pendingStrokes: Stroke[];
  activePath: Vec3[] | null;
  activeColor: string;
  plane: Plane;
  planeVisible: boolean;
  mesh: MeshData | null;
  meshVisible: boolean;
}

function polyline(ctx: CanvasRenderingContext2D, cam: Camera, basis: CameraBasis,
                  points: Vec3[], w: number, h: number): boolean {
  let started = false;
  ctx.beginPath();
  for (const p of points) {
    const s = project(cam, basis, p, w, h);
    if (!s) {
      started = false;
      continue;
    }
    if (started) {
      ctx.lineTo(s.x, s.y);
    } else {
      ctx.moveTo(s.x, s.y);
      started = true;
    }
  }
  ctx.stroke();
  return true;
}

function drawPlane(ctx: CanvasRenderingContext2D, cam: Camera, basis: CameraBasis,
                   plane: Plane, w: number, h: number): void {
  const n = plane.normal;
  const helper: Vec3 = Math.abs(n[1]) > 0.9 ? [1, 0, 0] : [0, 1, 0];
  const u: Vec3 = [
    n[1] * helper[2] - n[2] * helper[1],
    n[2] * helper[0] - n[0] * helper[2],
    n[0] * helper[1] - n[1] * helper[0],
  ];
  const ul = Math.hypot(u[0], u[1], u[2]) || 1;
  const ux: Vec3 = [u[0] / ul, u[1] / ul, u[2] / ul];
  const v: Vec3 = [
    n[1] * ux[2] - n[2] * ux[1],
    n[2] * ux[0] - n[0] * ux[2],
    n[0] * ux[1] - n[1] * ux[0],
  ];
  const half = 1.5;
  const cells = 12;
  ctx.strokeStyle = "rgba(140, 160, 190, 0.25)";
  ctx.lineWidth = 1;
  for (let k = 0; k <= cells; k++) {
    const off = -half + (2 * half * k) / cells;
    const a: Vec3 = [
      plane.point[0] + ux[0] * off - v[0] * half,
      plane.point[1] + ux[1] * off - v[1] * half,
      plane.point[2] + ux[2] * off - v[2] * half,
    ];
    const b: Vec3 = [
      plane.point[0] + ux[0] * off + v[0] * half,
      plane.point[1] + ux[1] * off + v[1] * half,
      plane.point[2] + ux[2] * off + v[2] * half,
    ];
    polyline(ctx, cam, basis, [a, b], w, h);
    const c: Vec3 = [
      plane.point[0] + v[0] * off - ux[0] * half,
      plane.point[1] + v[1] * off - ux[1] * half,
      plane.point[2] + v[2] * off - ux[2] * half,
    ];
    const d: Vec3 = [
      plane.point[0] + v[0] * off + ux[0] * half,
      plane.point[1] + v[1] * off + ux[1] * half,
      plane.point[2] + v[2] * off + ux[2] * half,
    ];
    polyline(ctx, cam, basis, [c, d], w, h);
  }
}

function drawAxes(ctx: CanvasRenderingContext2D, cam: Camera, basis: CameraBasis,
                  w: number, h: number): void {
  const origin: Vec3 = [0, 0, 0];
  const axes: [Vec3, string][] = [
    [[0.25, 0, 0], "#c0392b"],
    [[0, 0.25, 0], "#27ae60"],
    [[0, 0, 0.25], "#2980b9"],
  ];
  ctx.lineWidth = 2;
  for (const [tip, color] of axes) {
    ctx.strokeStyle = color;
    polyline(ctx, cam, basis, [origin, tip], w, h);
  }
}

export function renderScene(ctx: CanvasRenderingContext2D, state: SceneState,
                            w: number, h: number): void {
  ctx.clearRect(0, 0, w, h);
  const basis = cameraBasis(state.camera);
  if (state.planeVisible) drawPlane(ctx, state.camera, basis, state.plane, w, h);
  drawAxes(ctx, state.camera, basis, w, h);

  if (state.mesh && state.meshVisible) {
    ctx.strokeStyle = "rgba(90, 200, 160, 0.35)";
    ctx.lineWidth = 1;
    for (const [a, b, c] of state.mesh.triangles) {
      polyline(ctx, state.camera, basis,
               [state.mesh.vertices[a], state.mesh.vertices[b],
                state.mesh.vertices[c], state.mesh.vertices[a]], w, h);
    }
  }

  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  for (const stroke of state.document.strokes.values()) {
    ctx.strokeStyle = colorOf(stroke.color_index);
    ctx.lineWidth = stroke.role === "scaffold" ? 2 : 3;
    ctx.setLineDash(stroke.role === "scaffold" ? [6, 4] : []);
    polyline(ctx, state.camera, basis, stroke.points, w, h);
  }
  // provisional strokes: same hue, dashed and translucent until acknowledged
  ctx.globalAlpha = 0.55;
  for (const stroke of state.pendingStrokes) {
    ctx.strokeStyle = colorOf(stroke.color_index);
    ctx.lineWidth = 3;
    ctx.setLineDash([3, 3]);
    polyline(ctx, state.camera, basis, stroke.points, w, h);
  }
  ctx.globalAlpha = 1.0;
  ctx.setLineDash([]);

  if (state.activePath && state.activePath.length > 1) {
    ctx.strokeStyle = state.activeColor;
    ctx.lineWidth = 3;
    polyline(ctx, state.camera, basis, state.activePath, w, h);
  }
}
