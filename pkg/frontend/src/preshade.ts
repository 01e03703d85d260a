/**
 * Optional instance raster input and default-rule assistance.
 *
 * The instance JSON carries a dense id grid (0 = background, instances
 * numbered from 1) with a class table. Under the default rule an
 * instance occludes the background, so every instance pixel touching
 * background is foreground already; those cells are pre-shaded and the
 * annotator only draws segments for exceptions and instance-instance
 * boundaries.
 */

export interface InstanceGrid {
  width: number;
  height: number;
  ids: number[][];
  classes: Record<string, string>;
}

export function parseInstanceGrid(text: string): InstanceGrid {
  const raw = JSON.parse(text) as Partial<InstanceGrid>;
  if (
    typeof raw.width !== "number" ||
    typeof raw.height !== "number" ||
    !Array.isArray(raw.ids)
  ) {
    throw new Error("instance JSON needs width, height, ids");
  }
  if (raw.ids.length !== raw.height) {
    throw new Error(`ids has ${raw.ids.length} rows, expected ${raw.height}`);
  }
  for (const row of raw.ids) {
    if (!Array.isArray(row) || row.length !== raw.width) {
      throw new Error("ids rows must all have length width");
    }
  }
  return {
    width: raw.width,
    height: raw.height,
    ids: raw.ids,
    classes: raw.classes ?? {},
  };
}

/**
 * Cells on the foreground side of every instance-background boundary:
 * instance pixels with a 4-neighbour of background.
 */
export function defaultRuleCells(grid: InstanceGrid): Array<{ x: number; y: number }> {
  const out: Array<{ x: number; y: number }> = [];
  const { ids, width, height } = grid;
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      if (ids[r][c] === 0) continue;
      const bgNeighbour =
        (r > 0 && ids[r - 1][c] === 0) ||
        (r + 1 < height && ids[r + 1][c] === 0) ||
        (c > 0 && ids[r][c - 1] === 0) ||
        (c + 1 < width && ids[r][c + 1] === 0) ||
        r === 0 ||
        c === 0 ||
        r === height - 1 ||
        c === width - 1;
      if (bgNeighbour) out.push({ x: c, y: r });
    }
  }
  return out;
}
