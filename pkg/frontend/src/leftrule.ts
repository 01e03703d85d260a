/**
 * Left-rule geometry in screen coordinates (x right, y down).
 *
 * A directed segment claims the region to its visual left as the
 * foreground (the occluding side). Because y grows downward, the
 * visual-left normal of direction (dx, dy) is (dy, -dx): a segment
 * drawn left to right shades the region above the arrow.
 */

import { Segment, segmentLength } from "./segments.js";

export interface Vec {
  x: number;
  y: number;
}

/** Unit normal pointing into the foreground (visual left) half-plane. */
export function leftNormal(s: Segment): Vec {
  const len = segmentLength(s);
  return { x: (s.y1 - s.y0) / len, y: -(s.x1 - s.x0) / len };
}

export function midpoint(s: Segment): Vec {
  return { x: (s.x0 + s.x1) / 2, y: (s.y0 + s.y1) / 2 };
}

/** Point a fixed distance into the foreground side from the midpoint. */
export function shadingSample(s: Segment, dist = 2): Vec {
  const n = leftNormal(s);
  const m = midpoint(s);
  return { x: m.x + dist * n.x, y: m.y + dist * n.y };
}

/**
 * Corners of the preview band hugging the foreground side, in draw
 * order for a filled quad.
 */
export function shadingQuad(s: Segment, width = 6): Vec[] {
  const n = leftNormal(s);
  return [
    { x: s.x0, y: s.y0 },
    { x: s.x1, y: s.y1 },
    { x: s.x1 + width * n.x, y: s.y1 + width * n.y },
    { x: s.x0 + width * n.x, y: s.y0 + width * n.y },
  ];
}

/** Distance from a point to the segment (selection hit test). */
export function distanceToSegment(p: Vec, s: Segment): number {
  const dx = s.x1 - s.x0;
  const dy = s.y1 - s.y0;
  const den = dx * dx + dy * dy;
  let t = den > 0 ? ((p.x - s.x0) * dx + (p.y - s.y0) * dy) / den : 0;
  t = Math.max(0, Math.min(1, t));
  return Math.hypot(p.x - (s.x0 + t * dx), p.y - (s.y0 + t * dy));
}
