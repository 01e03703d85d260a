"""The dense oriented-boundary representation.

Each pixel carries a boundary value e and a direction theta in
(-pi, pi]. Ground-truth maps have e in {0, 1}; predicted maps carry
probabilities in [0, 1]. theta is NaN exactly where e == 0. Direction
encodes border ownership by the left rule: traversing the boundary along
theta keeps the occluding (nearer) region on the visual left, where
"left" is theta + pi/2 in the y-up frame, i.e. the pixel step
(-cos(theta), -sin(theta)) in (row, col).

Fragments are the sparse form: directed pixel chains with optional owner
(occluding) and occluded instance ids. Background is instance id 0.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .angles import chord_angle, circ_dist, wrap
from .chains import PixelChain, trace_chains
from .raster import load_fmap, save_fmap

BACKGROUND = 0

DEFAULT_CHORD_SPAN = 10


@dataclass
class OrientedBoundaryMap:
    """Per-pixel boundary strength and ownership direction.

    Attributes:
        edge: (h, w) float32, {0, 1} for ground truth or [0, 1] for
            predictions.
        orient: (h, w) float32 radians in (-pi, pi], NaN where edge == 0.
    """

    edge: np.ndarray
    orient: np.ndarray

    @property
    def shape(self):
        return self.edge.shape

    def support(self):
        return self.edge > 0


@dataclass
class BoundaryFragment:
    """Directed boundary chain with instance ownership.

    forward selects the traversal order over chain.points: True reads the
    stored order, False reads it reversed, None marks a fragment whose
    direction could not be determined. owner is the occluding instance id
    (0 = background), occluded the id on the other side; None means
    unknown.
    """

    chain: PixelChain
    forward: bool = True
    owner: int = None
    occluded: int = None

    def traversal_points(self):
        if self.forward is None:
            raise ValueError("fragment direction is undefined")
        pts = self.chain.points
        return list(pts) if self.forward else list(reversed(pts))


@dataclass
class TangentField:
    """Undirected local tangents of a binary edge map.

    tangent is (h, w) float32 in [0, pi), NaN off the edge set. isolated
    lists single-pixel chains whose tangent defaulted to 0.
    """

    tangent: np.ndarray
    isolated: list = field(default_factory=list)


def _chord_at(pts, i, span, closed):
    """Chord endpoints around index i, clipped at open ends, modular on
    closed chains."""
    n = len(pts)
    half = span // 2
    if closed:
        a = pts[(i - half) % n]
        b = pts[(i + half) % n]
    else:
        a = pts[max(i - half, 0)]
        b = pts[min(i + half, n - 1)]
    if a == b:  # tiny fragment, fall back to immediate neighbours
        if closed and n > 1:
            a, b = pts[(i - 1) % n], pts[(i + 1) % n]
        else:
            a, b = pts[max(i - 1, 0)], pts[min(i + 1, n - 1)]
    return a, b


def fragment_angles(fragment, span=DEFAULT_CHORD_SPAN):
    """Per-pixel direction angles along a fragment's traversal.

    The angle at each pixel is the chord over roughly `span` traversal
    steps centred there. Single-pixel fragments get 0.0 by convention.

    Returns:
        (points, angles): traversal points (closing duplicate dropped)
        and a float64 array of the same length.
    """
    pts = fragment.traversal_points()
    closed = len(pts) > 3 and pts[0] == pts[-1]
    core = pts[:-1] if closed else pts
    n = len(core)
    ang = np.zeros(n, dtype=np.float64)
    for i in range(n):
        a, b = _chord_at(core, i, span, closed)
        if a == b:
            ang[i] = 0.0
        else:
            ang[i] = chord_angle(a, b)
    return core, ang


def fragments_to_map(fragments, height, width, span=DEFAULT_CHORD_SPAN):
    """Rasterize directed fragments into a ground-truth oriented map.

    Each pixel is written once; where fragments touch, the fragment with
    the lower (row, col) traversal start wins.

    Raises:
        ValueError: on out-of-bounds pixels, undefined directions or
            span < 2.
    """
    if span < 2:
        raise ValueError("chord span must be >= 2")
    edge = np.zeros((height, width), dtype=np.float32)
    orient = np.full((height, width), np.nan, dtype=np.float32)
    order = sorted(
        range(len(fragments)),
        key=lambda i: (fragments[i].traversal_points()[0], i),
    )
    for fi in order:
        core, ang = fragment_angles(fragments[fi], span)
        for (r, c), theta in zip(core, ang):
            if not (0 <= r < height and 0 <= c < width):
                raise ValueError(f"fragment pixel {(r, c)} outside {height}x{width}")
            if edge[r, c]:
                continue
            edge[r, c] = 1.0
            orient[r, c] = wrap(theta)
    return OrientedBoundaryMap(edge=edge, orient=orient)


def map_to_fragments(m, span=DEFAULT_CHORD_SPAN):
    """Recover directed fragments from a ground-truth oriented map.

    Chains are traced from the edge set; each chain's direction is chosen
    so its chord angles agree with the stored theta. Chains whose
    agreement is mixed (goes below 90% both ways) are split at the first
    disagreement flip and the parts are processed recursively.

    Returns:
        List of BoundaryFragment with owner/occluded left as None.
    """
    issues = validate(m, ground_truth=True)
    if issues:
        raise ValueError("not a ground-truth map: " + issues[0])
    frags = []
    for chain in trace_chains(m.edge):
        work = [chain]
        while work:
            cur = work.pop()
            core, ang = fragment_angles(BoundaryFragment(chain=cur), span)
            stored = np.array([m.orient[r, c] for r, c in core], dtype=np.float64)
            agree = circ_dist(ang, stored) < np.pi / 2
            frac = float(np.mean(agree))
            if frac >= 0.9:
                frags.append(BoundaryFragment(chain=cur, forward=True))
            elif frac <= 0.1:
                frags.append(BoundaryFragment(chain=cur, forward=False))
            else:
                # mixed ownership along one chain: split at the first flip
                flip = int(np.argmax(agree != agree[0]))
                work.append(PixelChain(points=list(core[flip:])))
                work.append(PixelChain(points=list(core[:flip])))
    frags.sort(key=lambda f: (f.chain.points[0], len(f.chain.points)))
    return frags


def estimate_tangents(edges, window=DEFAULT_CHORD_SPAN):
    """Undirected tangent at every edge pixel via local PCA.

    Chains are traced first so the neighbourhood follows the chain, not
    the raster. The tangent is the principal axis of the pixel positions
    within window/2 steps along the chain, as an angle in [0, pi).

    Returns:
        TangentField; single-pixel chains get tangent 0 and are listed in
        isolated.
    """
    arr = np.asarray(edges)
    tangent = np.full(arr.shape, np.nan, dtype=np.float32)
    isolated = []
    half = max(window // 2, 1)
    for chain in trace_chains(arr):
        closed = chain.closed
        core = chain.core_points()
        n = len(core)
        if n == 1:
            tangent[core[0]] = 0.0
            isolated.append(core[0])
            continue
        for i in range(n):
            if closed:
                idx = [(i + k) % n for k in range(-half, half + 1)]
            else:
                idx = list(range(max(i - half, 0), min(i + half, n - 1) + 1))
            pos = np.array([(core[k][1], -core[k][0]) for k in idx], dtype=np.float64)
            pos -= pos.mean(axis=0)
            sxx = float(np.dot(pos[:, 0], pos[:, 0]))
            syy = float(np.dot(pos[:, 1], pos[:, 1]))
            sxy = float(np.dot(pos[:, 0], pos[:, 1]))
            phi = 0.5 * np.arctan2(2.0 * sxy, sxx - syy)
            tangent[core[i]] = np.mod(phi, np.pi)
    return TangentField(tangent=tangent, isolated=isolated)


def validate(m, ground_truth):
    """Check representation invariants.

    Args:
        m: OrientedBoundaryMap.
        ground_truth: if True, e must be exactly {0, 1}.

    Returns:
        List of violation strings, one per offending pixel or shape
        problem; empty when the map is well-formed.
    """
    out = []
    e = np.asarray(m.edge)
    t = np.asarray(m.orient)
    if e.ndim != 2 or t.shape != e.shape:
        return [f"shape mismatch: edge {e.shape}, orient {t.shape}"]
    if ground_truth:
        bad = np.argwhere((e != 0) & (e != 1))
        for r, c in bad:
            out.append(f"pixel ({r}, {c}): ground-truth e = {e[r, c]} not in {{0, 1}}")
    else:
        bad = np.argwhere((e < 0) | (e > 1) | ~np.isfinite(e))
        for r, c in bad:
            out.append(f"pixel ({r}, {c}): e = {e[r, c]} outside [0, 1]")
    defined = ~np.isnan(t)
    for r, c in np.argwhere((e == 0) & defined):
        out.append(f"pixel ({r}, {c}): theta defined where e = 0")
    for r, c in np.argwhere((e > 0) & ~defined):
        out.append(f"pixel ({r}, {c}): theta undefined where e > 0")
    vals = t[defined & (e > 0)]
    if vals.size:
        woff = (vals <= -np.pi) | (vals > np.pi)
        if np.any(woff):
            locs = np.argwhere(defined & (e > 0))
            bad_vals = np.nonzero(woff)[0]
            for k in bad_vals:
                r, c = locs[k]
                out.append(
                    f"pixel ({r}, {c}): theta = {vals[k]} outside (-pi, pi]"
                )
    return out


def save_map(prefix, m):
    """Write an oriented map as <prefix>.edge.fmap + <prefix>.orient.fmap."""
    save_fmap(f"{prefix}.edge.fmap", m.edge)
    save_fmap(f"{prefix}.orient.fmap", m.orient)


def load_map(prefix):
    edge = load_fmap(f"{prefix}.edge.fmap")
    orient = load_fmap(f"{prefix}.orient.fmap")
    return OrientedBoundaryMap(edge=edge, orient=orient)


def fragments_to_json(fragments):
    """Serialize fragments to the interchange dict form.

    Fragments with undefined direction are skipped with a warning; owner
    0 serializes as null, occluded 0 as "bg".
    """
    items = []
    for f in fragments:
        if f.forward is None:
            warnings.warn("skipping fragment with undefined direction")
            continue
        items.append(
            {
                "points": [[int(r), int(c)] for r, c in f.traversal_points()],
                "owner": None if f.owner in (None, BACKGROUND) else int(f.owner),
                "occluded": "bg"
                if f.occluded in (None, BACKGROUND)
                else int(f.occluded),
            }
        )
    return items


def fragments_from_json(payload):
    if not isinstance(payload, list):
        raise ValueError("fragment document must be a list")
    frags = []
    for item in payload:
        pts = [(int(r), int(c)) for r, c in item["points"]]
        owner = item.get("owner")
        occluded = item.get("occluded", "bg")
        frags.append(
            BoundaryFragment(
                chain=PixelChain(points=pts),
                forward=True,
                owner=BACKGROUND if owner is None else int(owner),
                occluded=BACKGROUND if occluded == "bg" else int(occluded),
            )
        )
    return frags


def save_fragments(path, fragments):
    from .raster import atomic_write_bytes

    payload = json.dumps(fragments_to_json(fragments), indent=2)
    atomic_write_bytes(path, payload.encode("utf-8") + b"\n")


def load_fragments(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fragments_from_json(json.load(fh))
