"""Tests for the synthetic scene generator.

The probe pool below excludes pixels within the chord half-window of an
open-chain end: those chains stop at junctions with other boundaries,
where rasterized chord angles are unreliable by construction.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlusia.annotate import load_segments
from occlusia.orientmap import load_fragments, load_map, validate
from occlusia.synth import (
    SceneSpec,
    ShapeSpec,
    make_dataset,
    make_scenes,
    random_scene_spec,
    render,
    save_scene,
    shape_mask,
)

from oracles import left_probe_fraction, signed_area_up

PROBE_END_MARGIN = 5  # chord half-window; open-chain ends sit at junctions


def edge_discontinuity_oracle(ids):
    """Pixels owning a 4-neighbor id discontinuity (nearer side owns)."""
    h, w = ids.shape
    out = set()
    for r in range(h):
        for c in range(w):
            a = ids[r, c]
            if a <= 0:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w):
                    continue
                b = ids[rr, cc]
                if b == 0 or b > a:
                    out.add((r, c))
                    break
    return out


def probe_pool(scenes):
    """(scene index, pixel, owner id, theta) away from chain junctions."""
    pool = []
    for si, sc in enumerate(scenes):
        for f in sc.fragments:
            pts = f.chain.core_points()
            n = len(pts)
            for i, p in enumerate(pts):
                th = sc.gt.orient[p]
                if not np.isfinite(th):
                    continue
                if not f.chain.closed and min(i, n - 1 - i) < PROBE_END_MARGIN:
                    continue
                owner = 0 if f.owner is None else f.owner
                pool.append((si, p, owner, float(th)))
    return pool


def one_disk_spec():
    return SceneSpec(
        width=48,
        height=48,
        shapes=[ShapeSpec("disk", {"cx": 23.0, "cy": 24.0, "r": 13.0}, "ball")],
        seed=2,
    )


def two_disk_spec():
    # first shape is nearest, so disk A (id 1) occludes disk B (id 2)
    return SceneSpec(
        width=64,
        height=64,
        shapes=[
            ShapeSpec("disk", {"cx": 26.0, "cy": 30.0, "r": 14.0}, "A"),
            ShapeSpec("disk", {"cx": 41.0, "cy": 33.0, "r": 15.0}, "B"),
        ],
        seed=5,
    )


class TestShapeMask:
    def test_disk_matches_analytic_predicate(self):
        s = ShapeSpec("disk", {"cx": 10.0, "cy": 7.5, "r": 5.0}, "d")
        m = shape_mask(s, 20, 24)
        rr, cc = np.mgrid[0:20, 0:24]
        want = (cc - 10.0) ** 2 + (rr - 7.5) ** 2 <= 25.0
        assert np.array_equal(m, want)

    def test_axis_aligned_ellipse(self):
        s = ShapeSpec(
            "ellipse", {"cx": 12.0, "cy": 10.0, "rx": 8.0, "ry": 4.0, "rot": 0.0}, "e"
        )
        m = shape_mask(s, 21, 25)
        assert m[10, 4] and m[10, 20]
        assert m[6, 12] and m[14, 12]
        assert not m[5, 12] and not m[10, 3]

    def test_ellipse_rotation_quarter_turn_swaps_axes(self):
        flat = ShapeSpec(
            "ellipse", {"cx": 15.0, "cy": 15.0, "rx": 9.0, "ry": 4.0, "rot": 0.0}, "e"
        )
        tall = ShapeSpec(
            "ellipse",
            {"cx": 15.0, "cy": 15.0, "rx": 9.0, "ry": 4.0, "rot": np.pi / 2},
            "e",
        )
        a = shape_mask(flat, 31, 31)
        b = shape_mask(tall, 31, 31)
        assert np.array_equal(b, a.T)

    def test_triangle_winding_does_not_matter(self):
        pts = [[4.0, 4.0], [20.0, 6.0], [8.0, 18.0]]
        fwd = shape_mask(ShapeSpec("polygon", {"points": pts}, "t"), 24, 24)
        rev = shape_mask(ShapeSpec("polygon", {"points": pts[::-1]}, "t"), 24, 24)
        assert np.array_equal(fwd, rev)
        assert fwd[8, 10]
        assert not fwd[2, 2] and not fwd[20, 20]

    def test_polygon_needs_three_points(self):
        s = ShapeSpec("polygon", {"points": [[0.0, 0.0], [5.0, 5.0]]}, "t")
        with pytest.raises(ValueError):
            shape_mask(s, 10, 10)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ShapeSpec("blob", {}, "x")


class TestSceneSpecJson:
    def test_round_trip(self):
        spec = two_disk_spec()
        back = SceneSpec.from_json(spec.to_json())
        assert back.width == spec.width and back.height == spec.height
        assert back.seed == spec.seed
        assert back.background == spec.background
        assert back.contrast == spec.contrast
        assert back.noise_amp == spec.noise_amp
        assert [s.kind for s in back.shapes] == [s.kind for s in spec.shapes]
        assert [s.params for s in back.shapes] == [s.params for s in spec.shapes]
        assert [s.class_label for s in back.shapes] == [
            s.class_label for s in spec.shapes
        ]


class TestRender:
    def test_one_disk_counterclockwise_interior_on_left(self):
        sc = render(one_disk_spec())
        assert [(f.owner, f.occluded, f.forward) for f in sc.fragments] == [
            (1, 0, True)
        ]
        f = sc.fragments[0]
        assert f.chain.closed
        # positive shoelace area in the y-up frame = counterclockwise
        assert signed_area_up(f.chain.points) > 0
        frac = left_probe_fraction(
            f.chain.points, f.chain.closed, sc.instances.ids, f.owner
        )
        assert frac == 1.0

    def test_disk_over_disk_puts_nearer_on_left(self):
        sc = render(two_disk_spec())
        pairs = [(f.owner, f.occluded) for f in sc.fragments]
        assert (1, 2) in pairs
        assert (2, 1) not in pairs
        for f in sc.fragments:
            if (f.owner, f.occluded) != (1, 2):
                continue
            frac = left_probe_fraction(
                f.chain.points, f.chain.closed, sc.instances.ids, f.owner
            )
            assert frac == 1.0

    def test_ground_truth_validates(self):
        sc = render(two_disk_spec())
        assert validate(sc.gt, ground_truth=True) == []

    def test_instance_segments_cover_all_occlusion_fragments(self):
        sc = render(two_disk_spec())
        inner = [f for f in sc.fragments if f.occluded != 0]
        assert len(sc.segments) >= len(inner)
        assert all(f.forward is True for f in sc.fragments)
        # chord endpoints sit on occlusion-fragment pixels
        pool = {p for f in inner for p in f.chain.points}
        for s in sc.segments:
            for x, y in ((s.x0, s.y0), (s.x1, s.y1)):
                r, c = int(round(y)), int(round(x))
                assert min(
                    abs(r - pr) + abs(c - pc) for pr, pc in pool
                ) <= 1
        # and every occlusion pixel lies within a chord span of one
        covered = set()
        for s in sc.segments:
            covered.add((int(round(s.y0)), int(round(s.x0))))
            covered.add((int(round(s.y1)), int(round(s.x1))))
        for f in inner:
            pts = f.chain.points
            idx = [i for i, p in enumerate(pts) if p in covered]
            assert idx and idx[0] == 0 and idx[-1] == len(pts) - 1
            gaps = np.diff(idx)
            assert gaps.max() <= 7

    def test_fully_hidden_shape_dropped_with_warning(self):
        spec = SceneSpec(
            width=48,
            height=48,
            shapes=[
                ShapeSpec("disk", {"cx": 24.0, "cy": 24.0, "r": 16.0}, "front"),
                ShapeSpec("disk", {"cx": 24.0, "cy": 24.0, "r": 6.0}, "hidden"),
            ],
            seed=0,
        )
        sc = render(spec)
        assert sc.warnings == ["dropped fully occluded shapes [2]"]
        assert sc.instances.classes == {1: "front"}
        assert set(np.unique(sc.instances.ids)) == {0, 1}

    def test_tiny_canvas_rejected(self):
        spec = SceneSpec(width=4, height=4, shapes=[], seed=0)
        with pytest.raises(ValueError):
            render(spec)

    @settings(max_examples=20, deadline=None)
    @given(
        cx=st.integers(18, 40),
        cy=st.integers(18, 40),
        r=st.integers(6, 14),
        seed=st.integers(0, 100),
    )
    def test_random_disk_is_counterclockwise(self, cx, cy, r, seed):
        spec = SceneSpec(
            width=56,
            height=56,
            shapes=[ShapeSpec("disk", {"cx": float(cx), "cy": float(cy), "r": float(r)}, "d")],
            seed=seed,
        )
        sc = render(spec)
        f = sc.fragments[0]
        assert f.chain.closed
        assert signed_area_up(f.chain.points) > 0
        assert left_probe_fraction(
            f.chain.points, f.chain.closed, sc.instances.ids, f.owner
        ) == 1.0


class TestProbe:
    def test_left_probe_hits_nearer_instance(self):
        # 1000 random junction-free boundary pixels over 10 seeded scenes:
        # stepping 2 px along theta + pi/2 must land in the owner >= 99%
        scenes = make_scenes(10, seed=5)
        pool = probe_pool(scenes)
        assert len(pool) >= 1000
        rng = np.random.default_rng(123)
        idx = rng.choice(len(pool), size=1000, replace=False)
        hits = 0
        for k in idx:
            si, (r, c), owner, th = pool[k]
            ids = scenes[si].instances.ids
            rr = int(np.rint(r - 2.0 * np.cos(th)))
            cc = int(np.rint(c - 2.0 * np.sin(th)))
            inside = 0 <= rr < ids.shape[0] and 0 <= cc < ids.shape[1]
            hits += int(inside and int(ids[rr, cc]) == owner)
        assert hits >= 990


class TestMakeDataset:
    def test_same_seed_bitwise_identical(self):
        a = make_dataset(3, seed=9)
        b = make_dataset(3, seed=9)
        assert len(a) == len(b) == 3
        for (img_a, gt_a), (img_b, gt_b) in zip(a, b):
            assert img_a.tobytes() == img_b.tobytes()
            assert gt_a.edge.tobytes() == gt_b.edge.tobytes()
            assert gt_a.orient.tobytes() == gt_b.orient.tobytes()

    def test_minimal_difficulty_single_two_shape_scene(self):
        scenes = make_scenes(1, seed=4, difficulty=0.0)
        assert len(scenes) == 1
        assert len(scenes[0].instances.classes) == 2

    def test_fifty_scene_validator_sweep(self):
        for sc in make_scenes(50, seed=17):
            assert validate(sc.gt, ground_truth=True) == []

    def test_dataset_pairs_come_from_scenes(self):
        scenes = make_scenes(2, seed=21)
        pairs = make_dataset(2, seed=21)
        for sc, (img, gt) in zip(scenes, pairs):
            assert img.tobytes() == sc.image.tobytes()
            assert gt.edge.tobytes() == sc.gt.edge.tobytes()

    def test_needs_at_least_one_scene(self):
        with pytest.raises(ValueError):
            make_dataset(0, seed=0)

    def test_difficulty_out_of_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            random_scene_spec(rng, difficulty=1.5)
        with pytest.raises(ValueError):
            random_scene_spec(rng, difficulty=-0.1)

    def test_difficulty_bounds_shape_count(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            spec = random_scene_spec(rng, difficulty=0.0)
            assert len(spec.shapes) == 2
        for _ in range(20):
            spec = random_scene_spec(rng, difficulty=1.0)
            assert 4 <= len(spec.shapes) <= 6

    def test_random_shapes_stay_inside_frame(self):
        for sc in make_scenes(6, seed=31):
            ids = sc.instances.ids
            assert not ids[0, :].any() and not ids[-1, :].any()
            assert not ids[:, 0].any() and not ids[:, -1].any()


class TestInstanceGtConsistency:
    def test_gt_edges_are_id_discontinuities(self):
        for sc in make_scenes(8, seed=13):
            got = set(map(tuple, np.argwhere(sc.gt.edge > 0)))
            assert got == edge_discontinuity_oracle(sc.instances.ids)

    def test_image_range_and_dtype(self):
        for sc in make_scenes(4, seed=2):
            assert sc.image.dtype == np.float32
            assert float(sc.image.min()) >= 0.0
            assert float(sc.image.max()) <= 1.0


class TestSaveScene:
    def test_artifacts_round_trip(self, tmp_path):
        sc = render(two_disk_spec())
        prefix = str(tmp_path / "scene0")
        save_scene(prefix, sc)
        gt = load_map(prefix)
        assert gt.edge.tobytes() == sc.gt.edge.tobytes()
        assert gt.orient.tobytes() == sc.gt.orient.tobytes()
        frags = load_fragments(prefix + ".fragments.json")
        assert len(frags) == len(sc.fragments)
        assert [list(f.chain.points) for f in frags] == [
            list(f.chain.points) for f in sc.fragments
        ]
        name, segs = load_segments(prefix + ".segments.json")
        assert name == "scene0.png"
        assert [(s.x0, s.y0, s.x1, s.y1) for s in segs] == [
            (s.x0, s.y0, s.x1, s.y1) for s in sc.segments
        ]
