/** OBJ subset reader for overlaying generated assets (v + fan-triangulated f). */

import { Vec3 } from "./document.js";

export interface MeshData {
  vertices: Vec3[];
  triangles: [number, number, number][];
}

export function parseObj(text: string): MeshData {
  const vertices: Vec3[] = [];
  const triangles: [number, number, number][] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line) continue;
    const parts = line.split(/\s+/);
    if (parts[0] === "v") {
      vertices.push([parseFloat(parts[1]), parseFloat(parts[2]), parseFloat(parts[3])]);
    } else if (parts[0] === "f") {
      const idx = parts.slice(1).map((tok) => parseInt(tok.split("/")[0], 10) - 1);
      for (let k = 1; k < idx.length - 1; k++) {
        triangles.push([idx[0], idx[k], idx[k + 1]]);
      }
    }
  }
  return { vertices, triangles };
}
