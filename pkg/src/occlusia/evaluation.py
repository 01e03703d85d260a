"""Evaluation: pixel correspondence and recall/accuracy curves.

Predicted and ground-truth boundary pixels are put in one-to-one
correspondence by a min-cost max-cardinality matching over pairs within
a distance cap (0.0075 of the image diagonal by default, the usual
boundary-benchmark slack). On top of the matching:

  * occlusion accuracy A_o: of the matched pairs, the fraction whose
    directions agree within a quarter turn,
  * boundary recall R_e: matched ground-truth pixels over all
    ground-truth pixels,

swept over 33 thresholds t_k = 2k/32 of the total confidence score.
A_o is undefined (NaN, blank in csv) where nothing matched.
"""

import heapq
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .angles import within_quarter_turn

MATCH_DIST_FRAC = 0.0075
N_THRESHOLDS = 33


@dataclass
class Correspondence:
    """One-to-one pixel matching between prediction and ground truth.

    pairs holds (pred_pixel, gt_pixel, distance) triples sorted by the
    predicted pixel; unmatched_pred / unmatched_gt list the leftovers.
    """

    pairs: list
    unmatched_pred: list
    unmatched_gt: list
    max_dist: float

    @property
    def total_cost(self):
        return float(sum(d for _, _, d in self.pairs))


@dataclass
class AorCurve:
    """Recall and orientation accuracy over the threshold sweep."""

    thresholds: np.ndarray
    recall: np.ndarray
    accuracy: np.ndarray  # NaN where undefined
    matched: np.ndarray
    correct: np.ndarray
    gt_total: int


def _pixels(mask):
    rows, cols = np.nonzero(np.asarray(mask))
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _feasible(pred_px, gt_px, max_dist):
    """Sparse adjacency pred -> [(gt index, distance)] within max_dist."""
    cell = max(float(max_dist), 1e-9)
    buckets = defaultdict(list)
    for j, (r, c) in enumerate(gt_px):
        buckets[(int(r // cell), int(c // cell))].append(j)
    adj = [[] for _ in pred_px]
    limit2 = float(max_dist) * float(max_dist)
    for i, (r, c) in enumerate(pred_px):
        br, bc = int(r // cell), int(c // cell)
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                for j in buckets.get((br + dr, bc + dc), ()):
                    gr, gc = gt_px[j]
                    d2 = float((r - gr) ** 2 + (c - gc) ** 2)
                    if d2 <= limit2:
                        adj[i].append((j, float(np.sqrt(d2))))
    return adj


def _components(adj, n_pred, n_gt):
    """Connected components of the bipartite feasibility graph."""
    radj = defaultdict(list)
    for i, edges in enumerate(adj):
        for j, _ in edges:
            radj[j].append(i)
    seen_p = [False] * n_pred
    seen_g = [False] * n_gt
    comps = []
    for start in range(n_pred):
        if seen_p[start] or not adj[start]:
            continue
        stack = [(0, start)]
        seen_p[start] = True
        preds, gts = [], []
        while stack:
            kind, node = stack.pop()
            if kind == 0:
                preds.append(node)
                for j, _ in adj[node]:
                    if not seen_g[j]:
                        seen_g[j] = True
                        stack.append((1, j))
            else:
                gts.append(node)
                for i in radj[node]:
                    if not seen_p[i]:
                        seen_p[i] = True
                        stack.append((0, i))
        comps.append((sorted(preds), sorted(gts)))
    return comps


def _ssp_match(adj, n_left, n_right):
    """Min-cost max-cardinality matching by successive shortest paths.

    Each round runs one Dijkstra with every unmatched left node as a
    zero-distance source and augments along the globally shortest path
    to a free right node, so each intermediate matching is minimum-cost
    for its size (augmenting per fixed left node instead can strand a
    costlier pairing when a later node finds no path). Potentials keep
    reduced costs nonnegative; nodes the early-terminated Dijkstra never
    settled are advanced by the path length. Returns match_left (gt
    index or -1 per pred).
    """
    inf = float("inf")
    pot_l = [0.0] * n_left
    pot_r = [0.0] * n_right
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    cost_of = {}
    for u, edges in enumerate(adj):
        for v, c in edges:
            cost_of[(u, v)] = c
    while True:
        dist_l = {}
        dist_r = {}
        prev_r = {}
        settled_l = set()
        settled_r = set()
        heap = []
        for u in range(n_left):
            if match_l[u] == -1 and adj[u]:
                dist_l[u] = 0.0
                heapq.heappush(heap, (0.0, 0, u))
        best_v = -1
        while heap:
            d, kind, node = heapq.heappop(heap)
            if kind == 0:
                if node in settled_l or d > dist_l.get(node, inf):
                    continue
                settled_l.add(node)
                for v, c in adj[node]:
                    if match_l[node] == v:
                        continue
                    nd = d + c + pot_l[node] - pot_r[v]
                    if nd < dist_r.get(v, inf):
                        dist_r[v] = nd
                        prev_r[v] = node
                        heapq.heappush(heap, (nd, 1, v))
            else:
                if node in settled_r or d > dist_r.get(node, inf):
                    continue
                settled_r.add(node)
                u2 = match_r[node]
                if u2 == -1:
                    best_v = node  # first settled free gt = shortest path
                    break
                nd = d - cost_of[(u2, node)] - pot_l[u2] + pot_r[node]
                if nd < dist_l.get(u2, inf):
                    dist_l[u2] = nd
                    heapq.heappush(heap, (nd, 0, u2))
        if best_v == -1:
            break
        cap = dist_r[best_v]
        for u in range(n_left):
            pot_l[u] += min(dist_l.get(u, inf), cap)
        for v in range(n_right):
            pot_r[v] += min(dist_r.get(v, inf), cap)
        v = best_v
        while True:
            u = prev_r[v]
            previous = match_l[u]
            match_l[u] = v
            match_r[v] = u
            if previous == -1:
                break
            v = previous
    return match_l


def match_boundaries(pred_mask, gt_mask, max_dist):
    """Correspond two binary boundary masks.

    Args:
        pred_mask, gt_mask: (h, w) boolean / 0-1 arrays.
        max_dist: pairing radius in pixels (Euclidean, inclusive).

    Returns:
        Correspondence. Cardinality is maximum; among maximum matchings
        the summed distance is minimal. Empty inputs give empty pairs.
    """
    if max_dist < 0:
        raise ValueError("max_dist must be >= 0")
    pred_px = _pixels(pred_mask)
    gt_px = _pixels(gt_mask)
    adj = _feasible(pred_px, gt_px, max_dist)
    pairs = []
    matched_p = [False] * len(pred_px)
    matched_g = [False] * len(gt_px)
    for preds, gts in _components(adj, len(pred_px), len(gt_px)):
        lmap = {p: k for k, p in enumerate(preds)}
        gmap = {g: k for k, g in enumerate(gts)}
        sub = [[] for _ in preds]
        for p in preds:
            for j, c in adj[p]:
                sub[lmap[p]].append((gmap[j], c))
        got = _ssp_match(sub, len(preds), len(gts))
        for k, gk in enumerate(got):
            if gk >= 0:
                i, j = preds[k], gts[gk]
                matched_p[i] = True
                matched_g[j] = True
                pairs.append((pred_px[i], gt_px[j], cost_lookup(adj, i, j)))
    pairs.sort(key=lambda t: (t[0], t[1]))
    return Correspondence(
        pairs=pairs,
        unmatched_pred=[p for i, p in enumerate(pred_px) if not matched_p[i]],
        unmatched_gt=[g for j, g in enumerate(gt_px) if not matched_g[j]],
        max_dist=float(max_dist),
    )


def cost_lookup(adj, i, j):
    for v, c in adj[i]:
        if v == j:
            return c
    raise KeyError((i, j))


def default_max_dist(shape, frac=MATCH_DIST_FRAC):
    h, w = shape
    return frac * float(np.hypot(h, w))


def threshold_grid(n=N_THRESHOLDS):
    """t_k = 2k / (n - 1) over the total-score range [0, 2]."""
    return 2.0 * np.arange(n, dtype=np.float64) / (n - 1)


def aor_curve(scored, gt, max_dist_frac=MATCH_DIST_FRAC, thresholds=None):
    """Sweep thresholds of the total score against a ground-truth map.

    Args:
        scored: ScoredBoundaryMap.
        gt: ground-truth OrientedBoundaryMap with at least one edge pixel.
        max_dist_frac: pairing radius as a fraction of the image diagonal.
        thresholds: override the default 33-point grid on [0, 2].

    Returns:
        AorCurve. recall is monotone non-increasing in the threshold;
        accuracy is NaN at thresholds with zero matches.
    """
    gt_mask = np.asarray(gt.edge) == 1
    gt_total = int(np.count_nonzero(gt_mask))
    if gt_total == 0:
        raise ValueError("aor_curve: ground truth has no boundary pixels")
    max_dist = default_max_dist(gt_mask.shape, max_dist_frac)
    ts = threshold_grid() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    matched = np.zeros(len(ts), dtype=np.int64)
    correct = np.zeros(len(ts), dtype=np.int64)
    support = scored.support()
    for k, t in enumerate(ts):
        mask = support & (np.asarray(scored.total) >= t)
        corr = match_boundaries(mask, gt_mask, max_dist)
        matched[k] = len(corr.pairs)
        correct[k] = sum(
            1
            for (pp, gp, _) in corr.pairs
            if within_quarter_turn(
                float(scored.orient[pp]), float(gt.orient[gp])
            )
        )
    recall = matched / float(gt_total)
    with np.errstate(invalid="ignore"):
        accuracy = np.where(matched > 0, correct / np.maximum(matched, 1), np.nan)
    return AorCurve(
        thresholds=ts,
        recall=recall,
        accuracy=accuracy,
        matched=matched,
        correct=correct,
        gt_total=gt_total,
    )


def merge_curves(curves):
    """Pool per-image counts into one curve (pixel-weighted aggregate)."""
    if not curves:
        raise ValueError("merge_curves: nothing to merge")
    ts = curves[0].thresholds
    for c in curves[1:]:
        if not np.array_equal(c.thresholds, ts):
            raise ValueError("merge_curves: threshold grids differ")
    matched = np.sum([c.matched for c in curves], axis=0)
    correct = np.sum([c.correct for c in curves], axis=0)
    gt_total = int(sum(c.gt_total for c in curves))
    recall = matched / float(gt_total)
    with np.errstate(invalid="ignore"):
        accuracy = np.where(matched > 0, correct / np.maximum(matched, 1), np.nan)
    return AorCurve(
        thresholds=ts.copy(),
        recall=recall,
        accuracy=accuracy,
        matched=matched,
        correct=correct,
        gt_total=gt_total,
    )


@dataclass
class PrTable:
    thresholds: np.ndarray
    precision: np.ndarray  # NaN where no predictions
    recall: np.ndarray
    f1: np.ndarray
    best_index: int = 0


def boundary_pr(scored, gt_edge, max_dist_frac=MATCH_DIST_FRAC):
    """Boundary-only precision/recall over the same threshold sweep."""
    gt_mask = np.asarray(gt_edge) == 1
    gt_total = int(np.count_nonzero(gt_mask))
    if gt_total == 0:
        raise ValueError("boundary_pr: ground truth has no boundary pixels")
    max_dist = default_max_dist(gt_mask.shape, max_dist_frac)
    ts = threshold_grid()
    precision = np.full(len(ts), np.nan)
    recall = np.zeros(len(ts))
    f1 = np.zeros(len(ts))
    support = scored.support()
    total = np.asarray(scored.total)
    for k, t in enumerate(ts):
        mask = support & (total >= t)
        n_pred = int(np.count_nonzero(mask))
        corr = match_boundaries(mask, gt_mask, max_dist)
        m = len(corr.pairs)
        recall[k] = m / gt_total
        if n_pred > 0:
            precision[k] = m / n_pred
        p = precision[k]
        if np.isfinite(p) and p + recall[k] > 0:
            f1[k] = 2 * p * recall[k] / (p + recall[k])
    best = int(np.nanargmax(f1)) if np.any(f1 > 0) else 0
    return PrTable(thresholds=ts, precision=precision, recall=recall, f1=f1,
                   best_index=best)


def curve_to_csv(curve):
    """Render an AorCurve as "threshold,recall,accuracy" lines; the
    accuracy column is blank where undefined."""
    lines = ["threshold,recall,accuracy"]
    for t, r, a in zip(curve.thresholds, curve.recall, curve.accuracy):
        acc = "" if np.isnan(a) else f"{a:.6f}"
        lines.append(f"{t:.6f},{r:.6f},{acc}")
    return "\n".join(lines) + "\n"


def pr_to_csv(table):
    """Render a PrTable as "threshold,precision,recall,f1" lines; the
    precision column is blank where nothing was predicted."""
    lines = ["threshold,precision,recall,f1"]
    for t, p, r, f in zip(table.thresholds, table.precision, table.recall,
                          table.f1):
        cell = "" if np.isnan(p) else f"{p:.6f}"
        lines.append(f"{t:.6f},{cell},{r:.6f},{f:.6f}")
    return "\n".join(lines) + "\n"


def curve_from_csv(text):
    rows = [ln for ln in text.strip().splitlines()[1:] if ln]
    ts, rs, accs = [], [], []
    for ln in rows:
        t, r, a = ln.split(",")
        ts.append(float(t))
        rs.append(float(r))
        accs.append(float(a) if a else np.nan)
    return (
        np.array(ts, dtype=np.float64),
        np.array(rs, dtype=np.float64),
        np.array(accs, dtype=np.float64),
    )


_SVG_COLORS = ("#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#b9770e", "#2c3e50")


def curves_to_svg(named_curves):
    """Deterministic recall/accuracy plot (no wall-clock metadata).

    Args:
        named_curves: list of (label, thresholds, recall, accuracy)
            or (label, AorCurve).

    Returns:
        SVG text: recall on x, accuracy on y, undefined points dropped.
    """
    width, height = 640, 480
    ml, mr, mt, mb = 60, 20, 20, 50
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + v * pw

    def sy(v):
        return mt + (1.0 - v) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i in range(6):
        v = i / 5.0
        parts.append(
            f'<line x1="{sx(v):.1f}" y1="{sy(0):.1f}" x2="{sx(v):.1f}" '
            f'y2="{sy(1):.1f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<line x1="{sx(0):.1f}" y1="{sy(v):.1f}" x2="{sx(1):.1f}" '
            f'y2="{sy(v):.1f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{sx(v):.1f}" y="{height - mb + 18}" font-size="12" '
            f'text-anchor="middle" font-family="sans-serif">{v:.1f}</text>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{sy(v) + 4:.1f}" font-size="12" '
            f'text-anchor="end" font-family="sans-serif">{v:.1f}</text>'
        )
    parts.append(
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="#333333" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" font-size="14" '
        f'text-anchor="middle" font-family="sans-serif">boundary recall</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + ph / 2:.1f}" font-size="14" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 16 {mt + ph / 2:.1f})">'
        "occlusion accuracy</text>"
    )
    for ci, item in enumerate(named_curves):
        if len(item) == 2:
            label, curve = item
            rec, acc = curve.recall, curve.accuracy
        else:
            label, _, rec, acc = item
        color = _SVG_COLORS[ci % len(_SVG_COLORS)]
        pts = [
            f"{sx(float(r)):.2f},{sy(float(a)):.2f}"
            for r, a in zip(rec, acc)
            if np.isfinite(a)
        ]
        if pts:
            parts.append(
                f'<polyline points="{" ".join(pts)}" fill="none" '
                f'stroke="{color}" stroke-width="2"/>'
            )
        parts.append(
            f'<text x="{ml + 12}" y="{mt + 20 + 18 * ci}" font-size="13" '
            f'font-family="sans-serif" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
