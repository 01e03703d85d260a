"""Synthetic scenes with exact occlusion ground truth.

A scene is a depth-ordered stack of convex shapes (disks, ellipses,
regular polygons) over a background. Rendering paints farthest shapes
first; instance ids are assigned nearest-first, so the id raster encodes
the depth order the ground truth needs. Shading correlates with depth
(nearer is brighter) plus seeded value noise, which gives a small conv
net an actual cue for which side of a boundary is in front.

Ground truth comes from the same boundary extraction the annotation
pipeline uses, oriented by the left-side probe. Boundaries against the
background are left for the default object-over-background rule;
instance-instance chains get chord segments (open chains one end-to-end
segment, closed chains three arc segments, since a one- or two-arc chord
projects ambiguously onto a cycle), so a round trip through the
annotation matcher reproduces the generator's fragments exactly.
"""

import json
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from .annotate import (
    InstanceMap,
    SegmentAnnotation,
    extract_instance_boundaries,
    matrix_from_fragments,
    orient_pixels_keeping_left,
)
from .orientmap import (
    BACKGROUND,
    BoundaryFragment,
    DEFAULT_CHORD_SPAN,
    fragments_to_map,
)
from .chains import PixelChain

DEFAULT_SIZE = 96
SEGMENT_SPAN = 6  # traversal steps per emitted chord segment

SHAPE_KINDS = ("disk", "ellipse", "polygon")


@dataclass
class ShapeSpec:
    """One convex shape. params by kind:
    disk: cx, cy, r; ellipse: cx, cy, rx, ry, rot;
    polygon: points [[x, y], ...] (convex, any winding)."""

    kind: str
    params: dict
    class_label: str

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")


@dataclass
class SceneSpec:
    """Scene description; shapes are ordered nearest first."""

    width: int
    height: int
    shapes: list
    seed: int = 0
    background: float = 0.15
    contrast: float = 1.0
    noise_amp: float = 0.06

    def to_json(self):
        return {
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "background": self.background,
            "contrast": self.contrast,
            "noise_amp": self.noise_amp,
            "shapes": [
                {"kind": s.kind, "params": s.params, "class": s.class_label}
                for s in self.shapes
            ],
        }

    @staticmethod
    def from_json(payload):
        shapes = [
            ShapeSpec(kind=s["kind"], params=s["params"], class_label=s["class"])
            for s in payload["shapes"]
        ]
        return SceneSpec(
            width=int(payload["width"]),
            height=int(payload["height"]),
            shapes=shapes,
            seed=int(payload.get("seed", 0)),
            background=float(payload.get("background", 0.15)),
            contrast=float(payload.get("contrast", 1.0)),
            noise_amp=float(payload.get("noise_amp", 0.06)),
        )


@dataclass
class RenderedScene:
    image: np.ndarray  # (h, w) float32 in [0, 1]
    instances: InstanceMap
    gt: object  # OrientedBoundaryMap
    fragments: list
    segments: list
    matrix: object
    warnings: list = field(default_factory=list)


def shape_mask(shape, height, width):
    """Boolean raster of the shape over pixel centers."""
    rr, cc = np.mgrid[0:height, 0:width]
    x = cc.astype(np.float64)
    y = rr.astype(np.float64)
    p = shape.params
    if shape.kind == "disk":
        return (x - p["cx"]) ** 2 + (y - p["cy"]) ** 2 <= p["r"] ** 2
    if shape.kind == "ellipse":
        ct, st = np.cos(p["rot"]), np.sin(p["rot"])
        u = (x - p["cx"]) * ct + (y - p["cy"]) * st
        v = -(x - p["cx"]) * st + (y - p["cy"]) * ct
        return (u / p["rx"]) ** 2 + (v / p["ry"]) ** 2 <= 1.0
    pts = np.asarray(p["points"], dtype=np.float64)
    if len(pts) < 3:
        raise ValueError("polygon needs at least 3 points")
    inside = np.ones((height, width), dtype=bool)
    sign = 0.0
    for i in range(len(pts)):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % len(pts)]
        cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)
        # convex polygon: inside pixels have one consistent cross sign
        if sign == 0.0:
            interior = pts.mean(axis=0)
            sign = np.sign(
                (x1 - x0) * (interior[1] - y0) - (y1 - y0) * (interior[0] - x0)
            )
            if sign == 0.0:
                raise ValueError("degenerate polygon edge")
        inside &= cross * sign >= 0
    return inside


def _value_noise(rng, height, width, cell=8):
    from .raster import resize_bilinear

    coarse = rng.uniform(-1.0, 1.0, size=(height // cell + 2, width // cell + 2))
    return resize_bilinear(coarse, height, width)


def render(spec):
    """Rasterize a scene: image, instance map, oriented ground truth,
    fragments and the segments an annotator would have drawn.

    Fully hidden shapes are dropped with a warning and ids renumbered.
    """
    h, w = spec.height, spec.width
    if h < 8 or w < 8:
        raise ValueError("scene too small to rasterize")
    masks = [shape_mask(s, h, w) for s in spec.shapes]
    vis = np.zeros((h, w), dtype=np.int32)
    for k in range(len(masks) - 1, -1, -1):  # farthest first, nearest wins
        vis[masks[k]] = k + 1
    warnings_out = []
    visible = [k + 1 for k in range(len(masks)) if np.any(vis == k + 1)]
    if len(visible) < len(masks):
        hidden = sorted(set(range(1, len(masks) + 1)) - set(visible))
        warnings_out.append(f"dropped fully occluded shapes {hidden}")
    remap = {old: new + 1 for new, old in enumerate(visible)}
    ids = np.zeros((h, w), dtype=np.int32)
    for old, new in remap.items():
        ids[vis == old] = new
    classes = {remap[old]: spec.shapes[old - 1].class_label for old in visible}
    instmap = InstanceMap(ids=ids, classes=classes)

    image = _shade(spec, ids, remap)

    fragments, segments = _ground_truth_fragments(instmap)
    gt = fragments_to_map(fragments, h, w)
    matrix = matrix_from_fragments(fragments, classes)
    return RenderedScene(
        image=image.astype(np.float32),
        instances=instmap,
        gt=gt,
        fragments=fragments,
        segments=segments,
        matrix=matrix,
        warnings=warnings_out,
    )


def _shade(spec, ids, remap):
    h, w = ids.shape
    k_visible = max(int(ids.max()), 1)
    rng_bg = np.random.default_rng([spec.seed, 0])
    mid = 0.5
    bg = mid + (spec.background - mid) * spec.contrast
    image = np.full((h, w), bg, dtype=np.float64)
    image += spec.noise_amp * _value_noise(rng_bg, h, w)
    for new_id in range(1, k_visible + 1):
        # nearer instances are brighter; depth rank = id (nearest first)
        if k_visible == 1:
            base = 0.85
        else:
            base = 0.85 - 0.5 * (new_id - 1) / (k_visible - 1)
        base = mid + (base - mid) * spec.contrast
        rng_i = np.random.default_rng([spec.seed, int(new_id)])
        tex = base + spec.noise_amp * _value_noise(rng_i, h, w)
        sel = ids == new_id
        image[sel] = tex[sel]
    return np.clip(image, 0.0, 1.0)


def _run_segments(run, ids, occluded, span=SEGMENT_SPAN):
    """Chord annotations covering one directed pixel run.

    Chords span a few traversal steps so they hug the chain even on
    tight arcs, and consecutive chords claim disjoint pixel stretches
    so none overrides its neighbour. A one-pixel run gets a unit-length
    segment drawn with the occluded side on the visual right.
    """
    n = len(run)
    if n == 1:
        # sub-pixel stroke: strictly nearer its own pixel than to any
        # neighbouring chain, drawn so the occluded side is on the right
        (r, c) = run[0]
        h, w = ids.shape
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and int(ids[rr, cc]) == occluded:
                th = float(np.arctan2(dc, dr))
                return [
                    SegmentAnnotation(
                        x0=float(c - 0.4 * np.cos(th)),
                        y0=float(r + 0.4 * np.sin(th)),
                        x1=float(c + 0.4 * np.cos(th)),
                        y1=float(r - 0.4 * np.sin(th)),
                    )
                ]
        return []
    segs = []
    s = 0
    while s < n - 1:
        e = min(s + span, n - 1)
        if n - 1 - e == 1:
            # never strand a lone trailing pixel
            e = n - 1
        (r0, c0), (r1, c1) = run[s], run[e]
        segs.append(
            SegmentAnnotation(x0=float(c0), y0=float(r0), x1=float(c1), y1=float(r1))
        )
        s = e + 1
    return segs


def _ground_truth_fragments(instmap, span=DEFAULT_CHORD_SPAN):
    """Oriented fragments plus the segments that encode them.

    Background boundaries carry no segments (the default rule recovers
    them); instance-instance chains are covered completely by chord
    segments running along the fragment direction.
    """
    fragments = []
    segments = []
    ids = instmap.ids
    for chain, (a, b) in extract_instance_boundaries(instmap):
        pts = list(chain.points)
        forward = orient_pixels_keeping_left(pts, ids, a, b, span)
        directed = pts if forward else list(reversed(pts))
        if b == BACKGROUND:
            fragments.append(
                BoundaryFragment(
                    chain=PixelChain(points=directed),
                    forward=True,
                    owner=a,
                    occluded=BACKGROUND,
                )
            )
            continue
        fragments.append(
            BoundaryFragment(
                chain=PixelChain(points=directed),
                forward=True,
                owner=a,
                occluded=b,
            )
        )
        core = directed[:-1] if (chain.closed and len(directed) > 1) else directed
        if chain.closed:
            # keep every chord shorter than half the loop so its own arc
            # is unambiguously the near one
            seg_span = max(1, min(SEGMENT_SPAN, len(core) // 2 - 1))
        else:
            seg_span = SEGMENT_SPAN
        segments.extend(_run_segments(core, ids, b, seg_span))
    return fragments, segments


def random_scene_spec(rng, width=DEFAULT_SIZE, height=DEFAULT_SIZE,
                      difficulty=0.25, n_shapes=None):
    """Draw a random SceneSpec. difficulty in [0, 1] raises the shape
    count (2 to 6) and lowers the brightness contrast."""
    if not 0.0 <= difficulty <= 1.0:
        raise ValueError("difficulty must be in [0, 1]")
    if n_shapes is None:
        lo = 2 + int(round(2 * difficulty))
        hi = 2 + int(round(4 * difficulty))
        n_shapes = int(rng.integers(lo, hi + 1))
    margin = 6
    # cap sizes so shape centers keep a nonempty placement range
    cap = (min(width, height) - 2 * margin) / 2.0
    if cap <= 4.0:
        raise ValueError("canvas too small for random shapes")
    size_hi = min(20.0, cap)
    size_lo = min(9.0, 0.6 * size_hi)
    shapes = []
    for _ in range(n_shapes):
        kind = SHAPE_KINDS[int(rng.integers(0, len(SHAPE_KINDS)))]
        size = float(rng.uniform(size_lo, size_hi))
        cx = float(rng.uniform(margin + size, width - margin - size))
        cy = float(rng.uniform(margin + size, height - margin - size))
        if kind == "disk":
            params = {"cx": cx, "cy": cy, "r": size}
        elif kind == "ellipse":
            params = {
                "cx": cx,
                "cy": cy,
                "rx": size,
                "ry": float(rng.uniform(0.55, 0.9)) * size,
                "rot": float(rng.uniform(0.0, np.pi)),
            }
        else:
            k = int(rng.integers(3, 7))
            rot = float(rng.uniform(0.0, 2 * np.pi))
            ang = rot + 2 * np.pi * np.arange(k) / k
            params = {
                "points": [
                    [cx + size * float(np.cos(t)), cy + size * float(np.sin(t))]
                    for t in ang
                ]
            }
        shapes.append(ShapeSpec(kind=kind, params=params, class_label=kind))
    return SceneSpec(
        width=width,
        height=height,
        shapes=shapes,
        seed=int(rng.integers(0, 2**31 - 1)),
        contrast=1.0 - 0.45 * difficulty,
        noise_amp=0.04 + 0.08 * difficulty,
    )


def _has_occlusion(scene):
    return any(b != BACKGROUND for f in scene.fragments for b in [f.occluded])


def make_scenes(n, seed=0, width=DEFAULT_SIZE, height=DEFAULT_SIZE,
                difficulty=0.25, require_overlap=True):
    """n fully rendered scenes, deterministic in seed.

    Scenes are redrawn (bounded retries) until at least two shapes stay
    visible and, when require_overlap is set, some instance pair
    actually occludes.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        scene = None
        for _attempt in range(40):
            spec = random_scene_spec(rng, width, height, difficulty)
            candidate = render(spec)
            if len(candidate.instances.classes) < min(2, len(spec.shapes)):
                continue
            if require_overlap and not _has_occlusion(candidate):
                continue
            scene = candidate
            break
        if scene is None:
            raise RuntimeError("could not draw a scene with visible overlap")
        out.append(scene)
    return out


def make_dataset(n, seed=0, width=DEFAULT_SIZE, height=DEFAULT_SIZE,
                 difficulty=0.25, require_overlap=True):
    """Training pairs (image, gt) for n scenes; see make_scenes."""
    scenes = make_scenes(n, seed, width, height, difficulty, require_overlap)
    return [(s.image, s.gt) for s in scenes]


def save_scene(prefix, scene, image_name=None):
    """Write every artifact of one scene next to the given prefix."""
    from .annotate import save_segments
    from .orientmap import save_fragments, save_map
    from .raster import (
        atomic_write_bytes,
        save_class_table,
        save_image_gray,
        save_instance_png,
    )

    name = image_name or f"{prefix.rsplit('/', 1)[-1]}.png"
    save_image_gray(f"{prefix}.png", scene.image)
    save_instance_png(f"{prefix}.ids.png", scene.instances.ids)
    save_class_table(f"{prefix}.classes.json", scene.instances.classes)
    save_map(prefix, scene.gt)
    save_fragments(f"{prefix}.fragments.json", scene.fragments)
    save_segments(f"{prefix}.segments.json", name, scene.segments)
    atomic_write_bytes(
        f"{prefix}.matrix.json",
        (json.dumps(scene.matrix.to_json(), indent=2) + "\n").encode("utf-8"),
    )
