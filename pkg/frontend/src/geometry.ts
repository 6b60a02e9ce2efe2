/** Camera math and sketch-plane picking for the canvas viewport. */

import { Vec3 } from "./document.js";

export const MIN_POINT_SPACING = 0.002; // meters between recorded samples

export const add = (a: Vec3, b: Vec3): Vec3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
export const sub = (a: Vec3, b: Vec3): Vec3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
export const scale = (a: Vec3, s: number): Vec3 => [a[0] * s, a[1] * s, a[2] * s];
export const dot = (a: Vec3, b: Vec3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
export const cross = (a: Vec3, b: Vec3): Vec3 => [
  a[1] * b[2] - a[2] * b[1],
  a[2] * b[0] - a[0] * b[2],
  a[0] * b[1] - a[1] * b[0],
];
export const length = (a: Vec3): number => Math.hypot(a[0], a[1], a[2]);
export const normalize = (a: Vec3): Vec3 => {
  const n = length(a);
  return n > 0 ? scale(a, 1 / n) : [0, 0, 0];
};
export const distance = (a: Vec3, b: Vec3): number => length(sub(a, b));

export interface Camera {
  target: Vec3;
  yaw: number;   // radians around +Y
  pitch: number; // radians above the horizon
  dist: number;  // meters from target
  fov: number;   // vertical, radians
}

export function defaultCamera(): Camera {
  return { target: [0, 0.4, 0], yaw: Math.PI / 5, pitch: Math.PI / 7, dist: 3.2, fov: Math.PI / 4 };
}

export interface CameraBasis {
  eye: Vec3;
  right: Vec3;
  up: Vec3;
  forward: Vec3; // unit, from eye toward target
}

export function cameraBasis(cam: Camera): CameraBasis {
  const cp = Math.cos(cam.pitch);
  const offset: Vec3 = [
    cp * Math.sin(cam.yaw) * cam.dist,
    Math.sin(cam.pitch) * cam.dist,
    cp * Math.cos(cam.yaw) * cam.dist,
  ];
  const eye = add(cam.target, offset);
  const forward = normalize(sub(cam.target, eye));
  const right = normalize(cross(forward, [0, 1, 0]));
  const up = cross(right, forward);
  return { eye, right, up, forward };
}

export interface Projected {
  x: number;
  y: number;
  depth: number;
}

export function project(cam: Camera, basis: CameraBasis, p: Vec3,
                        width: number, height: number): Projected | null {
  const rel = sub(p, basis.eye);
  const depth = dot(rel, basis.forward);
  if (depth <= 1e-6) return null; // behind the camera
  const fScale = (height / 2) / Math.tan(cam.fov / 2);
  const x = width / 2 + (dot(rel, basis.right) / depth) * fScale;
  const y = height / 2 - (dot(rel, basis.up) / depth) * fScale;
  return { x, y, depth };
}

export interface Ray {
  origin: Vec3;
  dir: Vec3;
}

export function screenRay(cam: Camera, basis: CameraBasis, px: number, py: number,
                          width: number, height: number): Ray {
  const fScale = (height / 2) / Math.tan(cam.fov / 2);
  const dx = (px - width / 2) / fScale;
  const dy = (height / 2 - py) / fScale;
  const dir = normalize(add(add(scale(basis.right, dx), scale(basis.up, dy)), basis.forward));
  return { origin: basis.eye, dir };
}

export interface Plane {
  point: Vec3;
  normal: Vec3;
}

export function intersectPlane(ray: Ray, plane: Plane): Vec3 | null {
  const denom = dot(ray.dir, plane.normal);
  if (Math.abs(denom) < 1e-9) return null;
  const t = dot(sub(plane.point, ray.origin), plane.normal) / denom;
  if (t <= 0) return null;
  return add(ray.origin, scale(ray.dir, t));
}

/**
 * Downsample a pointer path: keep points at least MIN_POINT_SPACING apart,
 * always including the final position when it is distinct. Paths with fewer
 * than 2 distinct points are discarded (null).
 */
export function downsamplePath(points: Vec3[], spacing = MIN_POINT_SPACING): Vec3[] | null {
  if (points.length === 0) return null;
  const out: Vec3[] = [points[0]];
  for (const p of points.slice(1)) {
    if (distance(p, out[out.length - 1]) >= spacing) out.push(p);
  }
  const last = points[points.length - 1];
  if (distance(last, out[out.length - 1]) > 1e-12 && out.length >= 2) {
    if (distance(last, out[out.length - 1]) < spacing) {
      out[out.length - 1] = last;
    } else {
      out.push(last);
    }
  }
  return out.length >= 2 ? out : null;
}
