/**
 * Segments file format shared with the matcher CLI.
 *
 * A session exports `{image, segments: [{x0, y0, x1, y1}]}` in draw
 * order. The consumer is strict: no extra keys anywhere, numeric
 * endpoints, and no segment may have coinciding endpoints. Coordinates
 * are pixel coordinates with x = column and y = row (y grows downward).
 */

export interface Segment {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface SegmentsFile {
  image: string;
  segments: Segment[];
}

/** Round to 2 decimal places, the precision kept by export. */
export function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

export function segmentLength(s: Segment): number {
  return Math.hypot(s.x1 - s.x0, s.y1 - s.y0);
}

export function serializeSegmentsFile(file: SegmentsFile): string {
  const body = {
    image: file.image,
    segments: file.segments.map((s) => ({
      x0: round2(s.x0),
      y0: round2(s.y0),
      x1: round2(s.x1),
      y1: round2(s.y1),
    })),
  };
  return JSON.stringify(body, null, 2) + "\n";
}

const FILE_KEYS = new Set(["image", "segments"]);
const SEGMENT_KEYS = new Set(["x0", "y0", "x1", "y1"]);

/**
 * Parse a segments file, collecting every schema violation the strict
 * consumer would reject. An export with a non-empty warnings list will
 * not load on the matcher side.
 */
export function parseSegmentsFile(text: string): {
  file: SegmentsFile;
  warnings: string[];
} {
  const warnings: string[] = [];
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (err) {
    return {
      file: { image: "", segments: [] },
      warnings: [`not valid JSON: ${(err as Error).message}`],
    };
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    return {
      file: { image: "", segments: [] },
      warnings: ["top level must be an object"],
    };
  }
  const obj = raw as Record<string, unknown>;
  for (const key of Object.keys(obj)) {
    if (!FILE_KEYS.has(key)) warnings.push(`unknown key ${JSON.stringify(key)}`);
  }
  const image = typeof obj.image === "string" ? obj.image : "";
  if ("image" in obj && typeof obj.image !== "string") {
    warnings.push("image must be a string");
  }
  if (!Array.isArray(obj.segments)) {
    warnings.push("segments must be an array");
    return { file: { image, segments: [] }, warnings };
  }
  const segments: Segment[] = [];
  obj.segments.forEach((item, i) => {
    if (typeof item !== "object" || item === null || Array.isArray(item)) {
      warnings.push(`segment ${i}: must be an object`);
      return;
    }
    const rec = item as Record<string, unknown>;
    for (const key of Object.keys(rec)) {
      if (!SEGMENT_KEYS.has(key)) {
        warnings.push(`segment ${i}: unknown key ${JSON.stringify(key)}`);
      }
    }
    const vals: number[] = [];
    for (const key of ["x0", "y0", "x1", "y1"]) {
      const v = rec[key];
      if (typeof v !== "number" || !Number.isFinite(v)) {
        warnings.push(`segment ${i}: ${key} must be a finite number`);
        return;
      }
      vals.push(v);
    }
    const [x0, y0, x1, y1] = vals;
    if (x0 === x1 && y0 === y1) {
      warnings.push(`segment ${i}: endpoints coincide`);
      return;
    }
    segments.push({ x0, y0, x1, y1 });
  });
  return { file: { image, segments }, warnings };
}
