/**
 * Shared round-trip fixture: a small scene with one square instance and
 * a scripted annotation session over its boundary.
 *
 * The script exercises the whole mutation surface (three adds, one
 * flip, one undo) and the recorded shading samples let an independent
 * consumer confirm that the side this tool previews as foreground is
 * the side its matcher assigns ownership to.
 */

import { AnnotationSession } from "./session.js";
import { SegmentsFile } from "./segments.js";
import { leftNormal, midpoint, shadingSample } from "./leftrule.js";
import { InstanceGrid } from "./preshade.js";

export interface ShadingRecord {
  /** Index into the exported segments list. */
  index: number;
  /** Segment midpoint, foreground unit normal, and a sample point 2 px
   *  into the shaded half-plane. */
  mid: { x: number; y: number };
  normal: { x: number; y: number };
  sample: { x: number; y: number };
}

/** 20x20 scene: background with one 10x10 square instance (id 1). */
export function buildFixtureScene(): InstanceGrid {
  const width = 20;
  const height = 20;
  const ids: number[][] = [];
  for (let r = 0; r < height; r++) {
    const row: number[] = [];
    for (let c = 0; c < width; c++) {
      row.push(r >= 5 && r <= 14 && c >= 5 && c <= 14 ? 1 : 0);
    }
    ids.push(row);
  }
  return { width, height, ids, classes: { "1": "disk" } };
}

/**
 * Run the scripted session: add x3, flip x1, undo x1, export.
 *
 * The adds trace three sides of the square. The first and third are
 * drawn with the square on the visual left (square occludes), the
 * second with the background on the left (an exception to the default
 * rule). The flip corrects the second segment; the undo then restores
 * it, so the export carries the three segments exactly as drawn.
 */
export function runScriptedSession(): {
  file: SegmentsFile;
  shading: ShadingRecord[];
} {
  const session = new AnnotationSession("fixture_scene.png");
  session.add(14, 4.75, 6, 4.75); // top edge, right to left: square on the left
  session.add(14.3, 6, 14.3, 12); // right edge, downward: background on the left
  session.add(6, 14.25, 14, 14.25); // bottom edge, left to right: square on the left
  session.flip(1);
  session.undo();
  const file = session.export();
  const shading = file.segments.map((seg, index) => ({
    index,
    mid: midpoint(seg),
    normal: leftNormal(seg),
    sample: shadingSample(seg, 2),
  }));
  return { file, shading };
}
