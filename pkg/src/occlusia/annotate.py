"""Reconstructing oriented ground truth from sparse annotations.

Inputs: an instance-id map (0 = background) with a class table, plus
line-segment annotations drawn near boundaries. Boundary chains are
extracted along instance-id discontinuities (one-pixel convention: the
chain lives on the lower-id side; for scenes whose ids are assigned
nearest-first that is the occluding side). Segments claim the chain
stretch between their projected endpoints and hand it their drawing
direction; unclaimed stretches fall back to the default rule that the
instance occludes the background. Instance-instance stretches that no
segment claims have no defensible direction and are reported instead of
guessed.

Coordinates in segment annotations are pixel units, x = column,
y = row (screen frame).
"""

import json
import warnings as _warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .chains import PixelChain, trace_chains
from .orientmap import (
    BACKGROUND,
    BoundaryFragment,
    DEFAULT_CHORD_SPAN,
    fragment_angles,
    fragments_to_map,
)

SEGMENT_RHO = 10.0
_PROBE_STEPS = (1.0, 1.8, 2.6)


@dataclass
class InstanceMap:
    """Dense instance ids with a class table.

    ids: (h, w) int array, 0 background, instances numbered 1..K
    contiguously. classes maps each id to a class name.
    """

    ids: np.ndarray
    classes: dict

    def validate(self):
        out = []
        arr = np.asarray(self.ids)
        present = sorted(int(v) for v in np.unique(arr) if v != 0)
        if any(v < 0 for v in present):
            out.append("negative instance ids")
        expect = list(range(1, len(present) + 1))
        if present != expect:
            out.append(f"ids not contiguous from 1: {present}")
        missing = [v for v in present if v not in self.classes]
        if missing:
            out.append(f"ids without class entry: {missing}")
        return out


@dataclass
class SegmentAnnotation:
    """Directed line segment in pixel coordinates (x = col, y = row)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if (self.x0, self.y0) == (self.x1, self.y1):
            raise ValueError("degenerate segment: endpoints coincide")

    @property
    def length(self):
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))


@dataclass
class OcclusionMatrix:
    """Square count table: counts[i, j] fragments where labels[i]
    occludes labels[j]. The background label "bg" is always last."""

    labels: list
    counts: np.ndarray

    def get(self, owner, occluded):
        return int(self.counts[self.labels.index(owner), self.labels.index(occluded)])

    def to_json(self):
        return {"labels": list(self.labels), "counts": self.counts.tolist()}

    @staticmethod
    def from_json(payload):
        return OcclusionMatrix(
            labels=list(payload["labels"]),
            counts=np.array(payload["counts"], dtype=np.int64),
        )


def matrix_from_fragments(fragments, classes):
    """Count directed fragments per (owner class, occluded class)."""
    labels = sorted(set(classes.values())) + ["bg"]
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)

    def label_of(instance):
        if instance in (None, BACKGROUND):
            return "bg"
        return classes[instance]

    for f in fragments:
        if f.forward is None:
            continue
        counts[index[label_of(f.owner)], index[label_of(f.occluded)]] += 1
    return OcclusionMatrix(labels=labels, counts=counts)


def matrix_to_csv(matrix):
    """Render a count table as CSV; the first column is the owner label."""
    lines = ["owner," + ",".join(matrix.labels)]
    for i, lab in enumerate(matrix.labels):
        lines.append(lab + "," + ",".join(str(int(v)) for v in matrix.counts[i]))
    return "\n".join(lines) + "\n"


def merge_matrices(matrices):
    """Sum matrices over a possibly differing label union."""
    labels = sorted({lab for m in matrices for lab in m.labels} - {"bg"}) + ["bg"]
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for m in matrices:
        for i, a in enumerate(m.labels):
            for j, b in enumerate(m.labels):
                counts[index[a], index[b]] += m.counts[i, j]
    return OcclusionMatrix(labels=labels, counts=counts)


def extract_instance_boundaries(instmap):
    """Chains along id discontinuities, one pixel wide.

    A pixel with id a > 0 belongs to the (a, b) boundary when an in-bounds
    4-neighbour carries id b with b == 0 or b > a (the chain sits on the
    lower-id side; background never holds boundary pixels). Corner pixels
    eligible towards several partners go to the smallest positive one,
    background last. The image border itself is not a boundary.

    Returns:
        List of (PixelChain, (a, b)) sorted by pair then chain order.
    """
    ids = np.asarray(instmap.ids)
    h, w = ids.shape
    per_pair = defaultdict(lambda: np.zeros((h, w), dtype=np.uint8))
    for r in range(h):
        for c in range(w):
            a = int(ids[r, c])
            if a == 0:
                continue
            partners = []
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w:
                    b = int(ids[rr, cc])
                    if b == 0 or b > a:
                        partners.append(b)
            if not partners:
                continue
            positive = [p for p in partners if p > 0]
            b = min(positive) if positive else 0
            per_pair[(a, b)][r, c] = 1
    out = []
    for pair in sorted(per_pair):
        for chain in trace_chains(per_pair[pair]):
            out.append((chain, pair))
    return out


def left_side_votes(points, ids, a, b, span=DEFAULT_CHORD_SPAN, angles=None):
    """Probe which side of a directed pixel run faces instance a.

    Steps to the visual left and right of the local chord at a few
    radii; landing on a or b is a vote (left hit on a and right hit on b
    both support "a on the left"). Probes landing out of bounds or on
    other ids are ignored. `angles` overrides the per-pixel directions
    (the local chord angles by default).

    Returns:
        (votes_a_left, votes_b_left)
    """
    if angles is None:
        frag = BoundaryFragment(chain=PixelChain(points=list(points)), forward=True)
        core, ang = fragment_angles(frag, span)
    else:
        core, ang = list(points), list(angles)
    arr = np.asarray(ids)
    h, w = arr.shape
    va = vb = 0

    def probe(r, c, drow, dcol):
        for s in _PROBE_STEPS:
            rr = int(np.rint(r + s * drow))
            cc = int(np.rint(c + s * dcol))
            if not (0 <= rr < h and 0 <= cc < w):
                return None
            hit = int(arr[rr, cc])
            if hit == a or hit == b:
                return hit
        return None

    for (r, c), th in zip(core, ang):
        lhit = probe(r, c, -np.cos(th), -np.sin(th))
        rhit = probe(r, c, np.cos(th), np.sin(th))
        if lhit == a:
            va += 1
        elif lhit == b:
            vb += 1
        if rhit == b:
            va += 1
        elif rhit == a:
            vb += 1
    return va, vb


def orient_pixels_keeping_left(points, ids, a, b, span=DEFAULT_CHORD_SPAN):
    """True if the run as given keeps instance a on the visual left,
    False if the reversed run does. Ties default to the given order."""
    va, vb = left_side_votes(points, ids, a, b, span)
    return va >= vb


def _point_to_segment_dist(px, py, seg):
    vx, vy = seg.x1 - seg.x0, seg.y1 - seg.y0
    qx, qy = px - seg.x0, py - seg.y0
    denom = vx * vx + vy * vy
    t = 0.0 if denom == 0 else max(0.0, min(1.0, (qx * vx + qy * vy) / denom))
    return float(np.hypot(qx - t * vx, qy - t * vy))


def _segment_samples(seg):
    n = max(int(np.ceil(seg.length)), 1) + 1
    ts = np.linspace(0.0, 1.0, n)
    xs = seg.x0 + ts * (seg.x1 - seg.x0)
    ys = seg.y0 + ts * (seg.y1 - seg.y0)
    return xs, ys


def _mean_dist_to_chain(seg, pts_xy):
    xs, ys = _segment_samples(seg)
    d = np.sqrt(
        (xs[:, None] - pts_xy[None, :, 0]) ** 2
        + (ys[:, None] - pts_xy[None, :, 1]) ** 2
    )
    return float(np.mean(np.min(d, axis=1)))


def _nearest_vertex(x, y, pts_xy):
    d = (pts_xy[:, 0] - x) ** 2 + (pts_xy[:, 1] - y) ** 2
    return int(np.argmin(d))


def _closed_arc(i0, i1, n, seg, core):
    """Pick the arc of a closed chain between two projected endpoints:
    the one whose pixels sit nearer the segment (tie: the shorter one)."""
    fwd = [(i0 + k) % n for k in range(((i1 - i0) % n) + 1)]
    bwd = [(i0 - k) % n for k in range(((i0 - i1) % n) + 1)]

    def mean_d(idx):
        return float(
            np.mean([_point_to_segment_dist(core[i][1], core[i][0], seg) for i in idx])
        )

    df, db = mean_d(fwd), mean_d(bwd)
    if df < db or (df == db and len(fwd) <= len(bwd)):
        return fwd
    return bwd


def match_segments(boundaries, segments, ids, rho=SEGMENT_RHO,
                   span=DEFAULT_CHORD_SPAN):
    """Assign segment annotations to boundary chains.

    Args:
        boundaries: list of (PixelChain, (a, b)) from
            extract_instance_boundaries.
        segments: list of SegmentAnnotation, file order (later segments
            win claim conflicts).
        ids: the instance-id raster (side probes).
        rho: max mean point-to-chain distance for a segment to attach.

    Returns:
        (fragments, warnings): directed BoundaryFragments covering every
        boundary pixel (instance-instance stretches with no segment keep
        forward=None), plus human-readable warnings.
    """
    warn = []
    cores = []
    pts_xy = []
    closed_flags = []
    for chain, _ in boundaries:
        core = chain.core_points()
        cores.append(core)
        pts_xy.append(np.array([(c, r) for r, c in core], dtype=np.float64))
        closed_flags.append(chain.closed)
    claims = [np.full(len(core), -1, dtype=np.int64) for core in cores]

    for k, seg in enumerate(segments):
        dists = [_mean_dist_to_chain(seg, xy) for xy in pts_xy]
        order = sorted(range(len(cores)), key=lambda i: (dists[i], i))
        if not order or dists[order[0]] > rho:
            warn.append(f"segment {k}: no boundary chain within {rho} px, ignored")
            continue
        ci = order[0]
        core, xy = cores[ci], pts_xy[ci]
        i0 = _nearest_vertex(seg.x0, seg.y0, xy)
        i1 = _nearest_vertex(seg.x1, seg.y1, xy)
        if closed_flags[ci]:
            idx = _closed_arc(i0, i1, len(core), seg, core)
        else:
            lo, hi = min(i0, i1), max(i0, i1)
            idx = list(range(lo, hi + 1))
        overridden = sorted({int(claims[ci][i]) for i in idx} - {-1, k})
        for j in overridden:
            warn.append(f"segment {k} overrides segment {j} on chain {ci}")
        claims[ci][idx] = k

    fragments = []
    for ci, (chain, (a, b)) in enumerate(boundaries):
        core = cores[ci]
        n = len(core)
        runs = _claim_runs(claims[ci], closed_flags[ci])
        claimed = []
        for idx, claim in runs:
            run_pts = [core[i] for i in idx]
            if claim >= 0:
                seg = segments[claim]
                claimed.append((list(idx), _direct_by_segment(run_pts, seg), seg))
            elif b == BACKGROUND:
                # default rule: the instance occludes the background
                pts = list(run_pts)
                if len(idx) == n and closed_flags[ci]:
                    pts = pts + [pts[0]]
                if not orient_pixels_keeping_left(pts, ids, a, b, span):
                    pts = list(reversed(pts))
                fragments.append(
                    BoundaryFragment(
                        chain=PixelChain(points=pts),
                        forward=True,
                        owner=a,
                        occluded=BACKGROUND,
                    )
                )
            else:
                warn.append(
                    f"chain {ci} (ids {a}/{b}): instance-instance boundary "
                    f"without a segment, direction undefined"
                )
                fragments.append(
                    BoundaryFragment(
                        chain=PixelChain(points=list(run_pts)),
                        forward=None,
                        owner=None,
                        occluded=None,
                    )
                )
        for _, pts, seg in _merge_claimed_runs(claimed, core, closed_flags[ci]):
            ang = None
            if len(pts) == 1:
                # one pixel has no chord; probe across the drawn direction
                ang = [float(np.arctan2(seg.y0 - seg.y1, seg.x1 - seg.x0))]
            va, vb = left_side_votes(pts, ids, a, b, span, angles=ang)
            owner, occluded = (a, b) if va >= vb else (b, a)
            fragments.append(
                BoundaryFragment(
                    chain=PixelChain(points=pts),
                    forward=True,
                    owner=owner,
                    occluded=occluded,
                )
            )
    return fragments, warn


def _merge_claimed_runs(pieces, core, closed):
    """Coalesce chain-adjacent claimed stretches whose drawn directions
    agree into maximal runs: annotation strokes subdivide a boundary,
    they do not cut it. A merged run covering a whole closed chain
    becomes a closed traversal from the chain's trace start.

    Each piece is (idx, pts, seg) with idx a contiguous walk of core
    indices (possibly wrapping) and pts the directed run; the same
    shape comes back.
    """
    n = len(core)

    def dirsign(piece):
        idx, pts = piece[0], piece[1]
        if len(pts) == 1:
            return 0
        return 1 if pts[0] == core[idx[0]] else -1

    def mergeable(p, q):
        nxt = p[0][-1] + 1
        if closed:
            nxt %= n
        if nxt != q[0][0]:
            return False
        dp, dq = dirsign(p), dirsign(q)
        if dp and dq and dp != dq:
            return False
        return bool(dp or dq)

    def join(p, q):
        pts = p[1] + q[1] if (dirsign(p) or dirsign(q)) > 0 else q[1] + p[1]
        return (p[0] + q[0], pts, p[2])

    out = []
    for p in sorted(pieces, key=lambda piece: piece[0][0]):
        if out and mergeable(out[-1], p):
            out[-1] = join(out[-1], p)
        else:
            out.append(p)
    if closed and len(out) > 1 and mergeable(out[-1], out[0]):
        out[0] = join(out[-1], out[0])
        out.pop()
    result = []
    for idx, pts, seg in out:
        if closed and len(idx) == n:
            j = pts.index(core[0])
            pts = pts[j:] + pts[:j]
            pts = pts + [pts[0]]
        result.append((idx, pts, seg))
    return result


def _claim_runs(claims, closed):
    """Contiguous equal-claim index runs; on closed chains the seam run
    wraps around."""
    n = len(claims)
    if n == 0:
        return []
    runs = []
    start = 0
    for i in range(1, n):
        if claims[i] != claims[start]:
            runs.append((list(range(start, i)), int(claims[start])))
            start = i
    runs.append((list(range(start, n)), int(claims[start])))
    if closed and len(runs) > 1 and runs[0][1] == runs[-1][1]:
        tail_idx, _ = runs.pop()
        head_idx, claim = runs[0]
        runs[0] = (tail_idx + head_idx, claim)
    return runs


def _direct_by_segment(run_pts, seg):
    """Order run pixels along the segment's drawing direction."""
    dy, dx = seg.y1 - seg.y0, seg.x1 - seg.x0
    score = 0.0
    for (r0, c0), (r1, c1) in zip(run_pts, run_pts[1:]):
        score += (r1 - r0) * dy + (c1 - c0) * dx
    if score == 0.0 and len(run_pts) > 1:
        r0, c0 = run_pts[0]
        r1, c1 = run_pts[-1]
        score = (r1 - r0) * dy + (c1 - c0) * dx
    return list(reversed(run_pts)) if score < 0 else list(run_pts)


def build_ground_truth(instmap, segments, rho=SEGMENT_RHO,
                       span=DEFAULT_CHORD_SPAN):
    """Full annotation pass: instance map + segments -> oriented map,
    occlusion matrix and a report.

    Fragments with undefined direction are left out of the map and the
    matrix; the report lists them with the warnings.

    Returns:
        (OrientedBoundaryMap, OcclusionMatrix, report dict)
    """
    problems = instmap.validate()
    if problems:
        raise ValueError("bad instance map: " + "; ".join(problems))
    boundaries = extract_instance_boundaries(instmap)
    fragments, warn = match_segments(boundaries, segments, instmap.ids, rho, span)
    defined = [f for f in fragments if f.forward is not None]
    h, w = np.asarray(instmap.ids).shape
    gt = fragments_to_map(defined, h, w, span)
    matrix = matrix_from_fragments(defined, instmap.classes)
    report = {
        "warnings": list(warn),
        "unlabelled": [
            {"points": [[int(r), int(c)] for r, c in f.chain.points]}
            for f in fragments
            if f.forward is None
        ],
    }
    return gt, matrix, report


def segments_to_json(image_name, segments):
    return {
        "image": image_name,
        "segments": [
            {"x0": s.x0, "y0": s.y0, "x1": s.x1, "y1": s.y1} for s in segments
        ],
    }


def segments_from_json(payload):
    bad = [k for k in payload if k not in ("image", "segments")]
    if bad:
        raise ValueError(f"unknown keys in segments file: {bad}")
    segs = []
    for i, item in enumerate(payload["segments"]):
        extra = [k for k in item if k not in ("x0", "y0", "x1", "y1")]
        if extra:
            raise ValueError(f"segment {i}: unknown keys {extra}")
        segs.append(
            SegmentAnnotation(
                x0=float(item["x0"]),
                y0=float(item["y0"]),
                x1=float(item["x1"]),
                y1=float(item["y1"]),
            )
        )
    return payload.get("image", ""), segs


def save_segments(path, image_name, segments):
    from .raster import atomic_write_bytes

    payload = json.dumps(segments_to_json(image_name, segments), indent=2)
    atomic_write_bytes(path, payload.encode("utf-8") + b"\n")


def load_segments(path):
    with open(path, "r", encoding="utf-8") as fh:
        return segments_from_json(json.load(fh))
