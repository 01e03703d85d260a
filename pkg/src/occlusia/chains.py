"""Tracing binary edge rasters into pixel chains.

A chain is a sequence of (row, col) pixels, consecutive entries
8-adjacent, no pixel repeated except that a closed chain repeats its
first pixel at the end. The chains of a raster partition its edge
pixels. Junction pixels (their set neighbours fall into 3 or more
separate runs around the 8-ring, so counting arms rather than raw
degree: an axis-aligned corner has a diagonal shortcut between two arm
pixels and must not split the chain) terminate chains; each junction
pixel is appended to the arm whose adjacent endpoint has the lowest
(row, col), and junction pixels left over after that are traced into
chains of their own.
"""

from dataclasses import dataclass, field

import numpy as np

N8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass
class PixelChain:
    """Ordered run of 8-connected pixels."""

    points: list = field(default_factory=list)

    @property
    def closed(self):
        return len(self.points) > 3 and self.points[0] == self.points[-1]

    def core_points(self):
        """Points without the duplicated closing pixel."""
        return self.points[:-1] if self.closed else self.points

    def validate(self):
        pts = self.points
        if not pts:
            raise ValueError("empty chain")
        seen = set()
        for i, p in enumerate(pts):
            if p in seen and not (self.closed and i == len(pts) - 1):
                raise ValueError(f"repeated pixel {p}")
            seen.add(p)
            if i and max(abs(p[0] - pts[i - 1][0]), abs(p[1] - pts[i - 1][1])) != 1:
                raise ValueError(f"points {pts[i - 1]} and {p} not 8-adjacent")


def _pixel_set(edges):
    arr = np.asarray(edges)
    rows, cols = np.nonzero(arr)
    return {(int(r), int(c)) for r, c in zip(rows, cols)}


def _adjacent(p, pixels):
    r, c = p
    return [q for d in N8 if (q := (r + d[0], c + d[1])) in pixels]


# circular order around a pixel, for counting neighbour runs
_RING = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def _neighbor_runs(p, pixels):
    """Number of maximal runs of set pixels around the 8-ring of p."""
    r, c = p
    present = [(r + dr, c + dc) in pixels for dr, dc in _RING]
    runs = sum(
        1 for i in range(8) if present[i] and not present[i - 1]
    )
    if runs == 0 and present[0]:
        return 1  # full ring
    return runs


def junction_pixels(edges):
    """Edge pixels whose neighbours form at least 3 separate runs.

    Counting runs rather than neighbours keeps axis-aligned corners
    (where two arm pixels also touch diagonally) from reading as
    junctions.
    """
    pixels = _pixel_set(edges)
    return {p for p in pixels if _neighbor_runs(p, pixels) >= 3}


def _walk_paths(pixels):
    """Trace a junction-free set into open paths and cycles.

    Deterministic: endpoints (at most one neighbour run) are visited in
    sorted order, then cycle starts; at each step the walk prefers an
    unvisited 4-adjacent pixel over a diagonal one (lexicographic tie
    break), which carries it around thick corners without taking the
    diagonal shortcut. A path whose tail returns next to its head is
    closed by repeating the head.
    """

    visited = set()

    def walk(start):
        path = [start]
        visited.add(start)
        cur = start
        while True:
            cands = [q for q in _adjacent(cur, pixels) if q not in visited]
            if not cands:
                break
            cands.sort(
                key=lambda q: (abs(q[0] - cur[0]) + abs(q[1] - cur[1]) != 1, q)
            )
            cur = cands[0]
            path.append(cur)
            visited.add(cur)
        if (
            len(path) >= 4
            and max(abs(path[0][0] - path[-1][0]),
                    abs(path[0][1] - path[-1][1])) == 1
        ):
            path.append(path[0])
        return path

    ordered = sorted(pixels)
    chains = []
    for p in ordered:
        if p not in visited and _neighbor_runs(p, pixels) <= 1:
            chains.append(walk(p))
    for p in ordered:
        if p not in visited:
            chains.append(walk(p))
    return chains


def _greedy_paths(pixels):
    """Deterministic chains over a leftover set with arbitrary degrees."""
    chains = []
    remaining = set(pixels)
    while remaining:
        cur = min(remaining)
        remaining.remove(cur)
        path = [cur]
        while True:
            nxt = [q for q in _adjacent(cur, remaining)]
            if not nxt:
                break
            cur = min(nxt)
            remaining.remove(cur)
            path.append(cur)
        chains.append(path)
    return chains


def trace_chains(edges):
    """Partition the edge pixels of a binary raster into chains.

    Args:
        edges: (h, w) array; nonzero marks edge pixels.

    Returns:
        List of PixelChain, canonically ordered: open chains run from
        their lexicographically smaller end, chains are sorted by first
        point then length.
    """
    pixels = _pixel_set(edges)
    if not pixels:
        return []
    junctions = {p for p in pixels if _neighbor_runs(p, pixels) >= 3}
    plain = pixels - junctions
    raw = _walk_paths(plain)

    # attach each junction pixel to the arm with the lowest adjacent endpoint
    leftover = []
    for j in sorted(junctions):
        best = None
        for ci, path in enumerate(raw):
            if path[0] == path[-1] and len(path) > 1:
                continue  # cycles have no free end
            for end_i in (0, len(path) - 1):
                p = path[end_i]
                if max(abs(p[0] - j[0]), abs(p[1] - j[1])) == 1:
                    key = (p, end_i, ci)
                    if best is None or key < best:
                        best = key
        if best is None:
            leftover.append(j)
            continue
        _, end_i, ci = best
        if end_i == 0:
            raw[ci].insert(0, j)
        else:
            raw[ci].append(j)
    raw.extend(_greedy_paths(leftover))

    chains = []
    for path in raw:
        if not (path[0] == path[-1] and len(path) > 1) and path[-1] < path[0]:
            path = path[::-1]
        chains.append(PixelChain(points=[tuple(p) for p in path]))
    chains.sort(key=lambda c: (c.points[0], len(c.points), c.points[-1]))
    return chains
