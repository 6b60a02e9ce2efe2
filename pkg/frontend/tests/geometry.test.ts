import { describe, expect, it } from "vitest";
import {
  cameraBasis,
  defaultCamera,
  distance,
  downsamplePath,
  intersectPlane,
  project,
  screenRay,
} from "../src/geometry.js";
import { Vec3 } from "../src/document.js";

describe("camera projection", () => {
  it("projects the look target to the viewport center", () => {
    const cam = defaultCamera();
    const basis = cameraBasis(cam);
    const s = project(cam, basis, cam.target, 800, 600)!;
    expect(s.x).toBeCloseTo(400, 6);
    expect(s.y).toBeCloseTo(300, 6);
    expect(s.depth).toBeCloseTo(cam.dist, 6);
  });

  it("screen ray through a pixel hits the plane the pixel shows", () => {
    const cam = defaultCamera();
    const basis = cameraBasis(cam);
    const plane = { point: [0, 0, 0] as Vec3, normal: [0, 1, 0] as Vec3 };
    for (const [px, py] of [[400, 300], [150, 420], [700, 200]]) {
      const ray = screenRay(cam, basis, px, py, 800, 600);
      const hit = intersectPlane(ray, plane);
      if (!hit) continue;
      expect(Math.abs(hit[1])).toBeLessThan(1e-9);
      const back = project(cam, basis, hit, 800, 600)!;
      expect(back.x).toBeCloseTo(px, 6);
      expect(back.y).toBeCloseTo(py, 6);
    }
  });

  it("returns null for rays parallel to the plane", () => {
    const ray = { origin: [0, 1, 0] as Vec3, dir: [1, 0, 0] as Vec3 };
    expect(intersectPlane(ray, { point: [0, 0, 0], normal: [0, 1, 0] })).toBeNull();
  });
});

describe("downsamplePath", () => {
  it("keeps samples at least 2 mm apart", () => {
    const path: Vec3[] = [];
    for (let k = 0; k <= 100; k++) path.push([k * 0.0005, 0, 0]); // 0.5 mm steps
    const out = downsamplePath(path)!;
    for (let k = 1; k < out.length; k++) {
      expect(distance(out[k - 1], out[k])).toBeGreaterThanOrEqual(0.002 - 1e-12);
    }
    expect(out[0]).toEqual([0, 0, 0]);
    expect(out[out.length - 1][0]).toBeCloseTo(0.05, 9);
  });

  it("discards clicks without a drag", () => {
    expect(downsamplePath([[0, 0, 0]])).toBeNull();
    expect(downsamplePath([[0, 0, 0], [0.0001, 0, 0], [0, 0, 0]])).toBeNull();
  });

  it("keeps a two-point stroke that spans the spacing", () => {
    const out = downsamplePath([[0, 0, 0], [0.01, 0, 0]]);
    expect(out).toEqual([[0, 0, 0], [0.01, 0, 0]]);
  });
});
