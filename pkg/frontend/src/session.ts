/**
 * Annotation session state: an ordered segment list with an undo stack.
 *
 * Segment order is preserved through every operation because the
 * consumer resolves claim conflicts by file order (later segments win).
 * Endpoints are rounded to 2 decimals on entry so the session always
 * holds exactly what an export would contain.
 */

import {
  Segment,
  SegmentsFile,
  round2,
  serializeSegmentsFile,
} from "./segments.js";
import { distanceToSegment, Vec } from "./leftrule.js";

export class AnnotationSession {
  readonly image: string;
  private segments: Segment[] = [];
  private undoStack: Segment[][] = [];
  selected: number | null = null;
  notice = "";

  constructor(image: string) {
    this.image = image;
  }

  list(): readonly Segment[] {
    return this.segments;
  }

  private snapshot(): void {
    this.undoStack.push(this.segments.map((s) => ({ ...s })));
  }

  /**
   * Append a directed segment from a drag. Returns false and leaves the
   * session unchanged when the drag is too short to survive rounding.
   */
  add(x0: number, y0: number, x1: number, y1: number): boolean {
    const seg = {
      x0: round2(x0),
      y0: round2(y0),
      x1: round2(x1),
      y1: round2(y1),
    };
    if (seg.x0 === seg.x1 && seg.y0 === seg.y1) {
      this.notice = "zero-length drag ignored";
      return false;
    }
    this.snapshot();
    this.segments.push(seg);
    this.notice = "";
    return true;
  }

  /** Swap the endpoints of one segment, flipping its foreground side. */
  flip(index: number): boolean {
    if (index < 0 || index >= this.segments.length) {
      this.notice =
        this.segments.length === 0
          ? "nothing to flip"
          : `no segment ${index} to flip`;
      return false;
    }
    this.snapshot();
    const s = this.segments[index];
    this.segments[index] = { x0: s.x1, y0: s.y1, x1: s.x0, y1: s.y0 };
    this.notice = "";
    return true;
  }

  flipLast(): boolean {
    return this.flip(this.segments.length - 1);
  }

  remove(index: number): boolean {
    if (index < 0 || index >= this.segments.length) {
      this.notice = "no segment to remove";
      return false;
    }
    this.snapshot();
    this.segments.splice(index, 1);
    if (this.selected !== null) {
      if (this.selected === index) this.selected = null;
      else if (this.selected > index) this.selected -= 1;
    }
    this.notice = "";
    return true;
  }

  removeSelected(): boolean {
    if (this.selected === null) {
      this.notice = "no segment selected";
      return false;
    }
    return this.remove(this.selected);
  }

  /** Revert the most recent add, flip, or remove. */
  undo(): boolean {
    const prev = this.undoStack.pop();
    if (prev === undefined) {
      this.notice = "nothing to undo";
      return false;
    }
    this.segments = prev;
    if (this.selected !== null && this.selected >= this.segments.length) {
      this.selected = null;
    }
    this.notice = "";
    return true;
  }

  /** Select the segment nearest the point, within a pixel tolerance. */
  selectAt(p: Vec, tolerance = 5): number | null {
    let best: number | null = null;
    let bestDist = tolerance;
    this.segments.forEach((s, i) => {
      const d = distanceToSegment(p, s);
      if (d <= bestDist) {
        best = i;
        bestDist = d;
      }
    });
    this.selected = best;
    return best;
  }

  export(): SegmentsFile {
    return {
      image: this.image,
      segments: this.segments.map((s) => ({ ...s })),
    };
  }

  exportText(): string {
    return serializeSegmentsFile(this.export());
  }
}
