/**
 * Client-side mirror of the sketch document: strokes, edit ops, apply
 * semantics, and canonical serialization that digest-matches the server.
 *
 * Transform math reproduces the engine's formulas operation-for-operation so
 * the resulting doubles are bit-identical (IEEE ops round identically when
 * evaluated in the same order).
 */

import { CanonicalValue, canonicalStringify, f, i, sha256Hex } from "./canonical.js";

export type Vec3 = [number, number, number];
export type RoleName = "contour" | "scaffold" | "anchor";

export interface Stroke {
  stroke_id: string;
  author_id: string;
  role: RoleName;
  points: Vec3[];
  created_at: number;
  color_index: number;
}

export interface Quaternion {
  w: number;
  x: number;
  y: number;
  z: number;
}

export interface EditOp {
  op_id: string;
  author_id: string;
  kind: "add_stroke" | "delete_stroke" | "transform_stroke" | "set_role" | "set_calibration";
  stroke?: Stroke;
  stroke_id?: string;
  rotation?: Quaternion;
  translation?: Vec3;
  uniform_scale?: number;
  role?: RoleName;
  scale?: number;
  seq?: number;
}

export interface SketchDocument {
  doc_id: string;
  schema_version: number;
  calibration_scale: number;
  strokes: Map<string, Stroke>;
  revision: number;
  op_log: EditOp[];
}

export function emptyDocument(docId: string): SketchDocument {
  return {
    doc_id: docId,
    schema_version: 1,
    calibration_scale: 1.0,
    strokes: new Map(),
    revision: 0,
    op_log: [],
  };
}

export class ApplyError extends Error {
  constructor(public reason: string, message: string) {
    super(message);
  }
}

function rotate(q: Quaternion, p: Vec3): Vec3 {
  // mirrors the engine exactly: t = 2 (q_v x p); p + w t + (q_v x t)
  const [px, py, pz] = p;
  const tx = 2.0 * (q.y * pz - q.z * py);
  const ty = 2.0 * (q.z * px - q.x * pz);
  const tz = 2.0 * (q.x * py - q.y * px);
  return [
    px + q.w * tx + (q.y * tz - q.z * ty),
    py + q.w * ty + (q.z * tx - q.x * tz),
    pz + q.w * tz + (q.x * ty - q.y * tx),
  ];
}

export function applyOp(doc: SketchDocument, op: EditOp): SketchDocument {
  const strokes = new Map(doc.strokes);
  let calibration = doc.calibration_scale;
  switch (op.kind) {
    case "add_stroke": {
      const stroke = op.stroke!;
      if (strokes.has(stroke.stroke_id)) {
        throw new ApplyError("DuplicateStrokeId", `stroke ${stroke.stroke_id} exists`);
      }
      strokes.set(stroke.stroke_id, stroke);
      break;
    }
    case "delete_stroke": {
      if (!strokes.delete(op.stroke_id!)) {
        throw new ApplyError("UnknownStroke", `no stroke ${op.stroke_id}`);
      }
      break;
    }
    case "transform_stroke": {
      const old = strokes.get(op.stroke_id!);
      if (!old) throw new ApplyError("UnknownStroke", `no stroke ${op.stroke_id}`);
      const s = op.uniform_scale!;
      const t = op.translation!;
      const moved = old.points.map((p) => {
        const scaled: Vec3 = [p[0] * s, p[1] * s, p[2] * s];
        const r = rotate(op.rotation!, scaled);
        return [r[0] + t[0], r[1] + t[1], r[2] + t[2]] as Vec3;
      });
      for (const p of moved) {
        if (!p.every(isFinite)) {
          throw new ApplyError("NonFiniteCoordinate", "transform produced non-finite point");
        }
      }
      strokes.set(op.stroke_id!, { ...old, points: moved });
      break;
    }
    case "set_role": {
      const old = strokes.get(op.stroke_id!);
      if (!old) throw new ApplyError("UnknownStroke", `no stroke ${op.stroke_id}`);
      strokes.set(op.stroke_id!, { ...old, role: op.role! });
      break;
    }
    case "set_calibration": {
      if (!(op.scale! > 0)) throw new ApplyError("NonPositiveScale", "scale must be > 0");
      calibration = op.scale!;
      break;
    }
  }
  return {
    ...doc,
    strokes,
    calibration_scale: calibration,
    revision: doc.revision + 1,
    op_log: [...doc.op_log, op],
  };
}

// --- wire <-> typed ---

export function strokeFromWire(data: any): Stroke {
  return {
    stroke_id: data.stroke_id,
    author_id: data.author_id,
    role: data.role,
    points: data.points.map((p: number[]) => [p[0], p[1], p[2]] as Vec3),
    created_at: data.created_at,
    color_index: data.color_index,
  };
}

export function opFromWire(data: any): EditOp {
  const op: EditOp = {
    op_id: data.op_id,
    author_id: data.author_id,
    kind: data.kind,
  };
  if (data.kind === "add_stroke") op.stroke = strokeFromWire(data.stroke);
  if (data.stroke_id !== undefined) op.stroke_id = data.stroke_id;
  if (data.rotation !== undefined) op.rotation = data.rotation;
  if (data.translation !== undefined) {
    op.translation = [data.translation[0], data.translation[1], data.translation[2]];
  }
  if (data.uniform_scale !== undefined) op.uniform_scale = data.uniform_scale;
  if (data.role !== undefined && data.kind === "set_role") op.role = data.role;
  if (data.scale !== undefined) op.scale = data.scale;
  if (data.seq !== undefined) op.seq = data.seq;
  return op;
}

export function documentFromWire(data: any): SketchDocument {
  const strokes = new Map<string, Stroke>();
  for (const key of Object.keys(data.strokes)) {
    strokes.set(key, strokeFromWire(data.strokes[key]));
  }
  return {
    doc_id: data.doc_id,
    schema_version: data.schema_version,
    calibration_scale: data.calibration_scale,
    strokes,
    revision: data.revision,
    op_log: data.op_log.map(opFromWire),
  };
}

export function strokeToWire(s: Stroke): any {
  return {
    author_id: s.author_id,
    color_index: s.color_index,
    created_at: s.created_at,
    points: s.points.map((p) => [p[0], p[1], p[2]]),
    role: s.role,
    stroke_id: s.stroke_id,
  };
}

export function opToWire(op: EditOp): any {
  const out: any = { author_id: op.author_id, kind: op.kind, op_id: op.op_id };
  if (op.kind === "add_stroke") out.stroke = strokeToWire(op.stroke!);
  if (op.kind === "delete_stroke") out.stroke_id = op.stroke_id;
  if (op.kind === "transform_stroke") {
    out.stroke_id = op.stroke_id;
    out.rotation = { w: op.rotation!.w, x: op.rotation!.x, y: op.rotation!.y, z: op.rotation!.z };
    out.translation = op.translation;
    out.uniform_scale = op.uniform_scale;
  }
  if (op.kind === "set_role") {
    out.stroke_id = op.stroke_id;
    out.role = op.role;
  }
  if (op.kind === "set_calibration") out.scale = op.scale;
  if (op.seq !== undefined) out.seq = op.seq;
  return out;
}

// --- canonical serialization (schema-aware: marks float vs int fields) ---

function strokeCanonical(s: Stroke): CanonicalValue {
  return {
    author_id: s.author_id,
    color_index: i(s.color_index),
    created_at: i(s.created_at),
    points: s.points.map((p) => [f(p[0]), f(p[1]), f(p[2])]),
    role: s.role,
    stroke_id: s.stroke_id,
  };
}

function opCanonical(op: EditOp): CanonicalValue {
  const out: { [k: string]: CanonicalValue } = {
    author_id: op.author_id,
    kind: op.kind,
    op_id: op.op_id,
  };
  if (op.kind === "add_stroke") out.stroke = strokeCanonical(op.stroke!);
  if (op.kind === "delete_stroke") out.stroke_id = op.stroke_id!;
  if (op.kind === "transform_stroke") {
    out.stroke_id = op.stroke_id!;
    out.rotation = {
      w: f(op.rotation!.w), x: f(op.rotation!.x), y: f(op.rotation!.y), z: f(op.rotation!.z),
    };
    out.translation = [f(op.translation![0]), f(op.translation![1]), f(op.translation![2])];
    out.uniform_scale = f(op.uniform_scale!);
  }
  if (op.kind === "set_role") {
    out.stroke_id = op.stroke_id!;
    out.role = op.role!;
  }
  if (op.kind === "set_calibration") out.scale = f(op.scale!);
  if (op.seq !== undefined) out.seq = i(op.seq);
  return out;
}

export function canonicalDocumentString(doc: SketchDocument): string {
  const strokes: { [k: string]: CanonicalValue } = {};
  for (const key of Array.from(doc.strokes.keys()).sort()) {
    strokes[key] = strokeCanonical(doc.strokes.get(key)!);
  }
  return canonicalStringify({
    calibration_scale: f(doc.calibration_scale),
    doc_id: doc.doc_id,
    op_log: doc.op_log.map(opCanonical),
    revision: i(doc.revision),
    schema_version: i(doc.schema_version),
    strokes,
  });
}

export function documentDigest(doc: SketchDocument): Promise<string> {
  return sha256Hex(canonicalDocumentString(doc));
}
