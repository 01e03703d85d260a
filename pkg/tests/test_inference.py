import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occlusia.angles import circ_dist, wrap
from occlusia.inference import (
    ScoredBoundaryMap,
    align_orientation,
    infer,
    load_scored,
    multiscale_average,
    nms,
    normal_angles,
    orient_confidence,
    predict,
    save_scored,
)
from occlusia.orientmap import estimate_tangents, fragments_to_map, validate
from occlusia.raster import bilinear_sample
from occlusia.synth import SceneSpec, ShapeSpec, render
from occlusia.tinynet import TrainConfig, default_params, train

ABS_COS_3 = 0.9899924966004454


def line_prob(h=9, w=12, row=4):
    p = np.zeros((h, w))
    p[row, 1:-1] = 1.0
    return p


class TestNms:
    def test_hand_traced_profile(self):
        p = np.tile(np.array([0.1, 0.5, 0.9, 0.5, 0.1]), (7, 1))
        keep, conf = nms(p)
        assert np.array_equal(keep.sum(axis=0), [0, 0, 7, 0, 0])
        np.testing.assert_allclose(conf[:, 2], 0.9)

    def test_all_zeros(self):
        keep, conf = nms(np.zeros((6, 6)))
        assert not keep.any()
        np.testing.assert_array_equal(conf, 0.0)

    def test_thin_line_survives(self):
        p = line_prob()
        keep, _ = nms(p)
        assert keep[4, 1:-1].all()
        assert keep.sum() == 10

    def test_two_wide_plateau_margins(self):
        # strict > on the positive side keeps exactly one plateau pixel
        # at margin 1.0; the default 1.01 tolerates the near-tie on both
        plat = np.tile(np.array([0.1, 0.8, 0.8, 0.1, 0.0]), (7, 1))
        k_tight, _ = nms(plat, margin=1.0)
        k_default, _ = nms(plat, margin=1.01)
        assert np.array_equal(k_tight.sum(axis=0), [0, 0, 7, 0, 0])
        assert np.array_equal(k_default.sum(axis=0), [0, 7, 7, 0, 0])

    def test_support_subset_of_input(self):
        rng = np.random.default_rng(3)
        p = rng.random((16, 16)) * (rng.random((16, 16)) < 0.5)
        keep, conf = nms(p)
        assert not keep[p == 0].any()
        np.testing.assert_array_equal(conf > 0, keep & (p > 0))

    def test_survivors_satisfy_predicate_by_direct_scan(self):
        rng = np.random.default_rng(4)
        from occlusia.raster import gaussian_smooth

        p = gaussian_smooth(rng.random((20, 20)), 1.0)
        keep, _ = nms(p)
        phi = normal_angles(p)
        h, w = p.shape
        for r in range(h):
            for c in range(w):
                nx, ny = math.cos(phi[r, c]), math.sin(phi[r, c])
                plus = bilinear_sample(p, c + nx, r + ny)
                minus = bilinear_sample(p, c - nx, r - ny)
                want = (p[r, c] * 1.01 > plus) and (p[r, c] * 1.01 >= minus)
                assert keep[r, c] == want

    def test_transposition_covariance(self):
        rng = np.random.default_rng(5)
        from occlusia.raster import gaussian_smooth

        p = gaussian_smooth(rng.random((14, 18)), 1.0)
        keep, _ = nms(p)
        keep_t, _ = nms(p.T.copy())
        np.testing.assert_array_equal(keep_t, keep.T)


class TestAlign:
    def test_within_quarter_turn_keeps_tangent(self):
        assert align_orientation(0.2, 0.1) == pytest.approx(0.1)

    def test_reversal(self):
        assert align_orientation(3.0, 0.0) == pytest.approx(math.pi)

    def test_near_seam_reversal(self):
        got = align_orientation(-math.pi / 2 + 0.01, math.pi / 2)
        assert got == pytest.approx(-math.pi / 2)

    def test_nan_tangent_passthrough_with_flag(self):
        with pytest.warns(UserWarning):
            out = align_orientation(1.3, math.nan)
        assert out == pytest.approx(1.3)

    @given(st.floats(-20.0, 20.0), st.floats(0.0, math.pi - 1e-9))
    @settings(max_examples=200, deadline=None)
    def test_snaps_exactly_and_stays_close(self, pred, tangent):
        aligned = align_orientation(pred, tangent)
        assert aligned in (
            pytest.approx(wrap(tangent)),
            pytest.approx(wrap(tangent + math.pi)),
        )
        d = (pred - tangent) % (2 * math.pi)
        if min(abs(d - math.pi / 2), abs(d - 3 * math.pi / 2)) > 1e-9:
            assert circ_dist(wrap(pred), aligned) < math.pi / 2 + 1e-9


class TestOrientConfidence:
    def test_equal_is_one(self):
        assert orient_confidence(0.7, 0.7) == pytest.approx(1.0)

    def test_perpendicular_is_zero(self):
        assert orient_confidence(math.pi / 2, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_difference_three(self):
        assert orient_confidence(3.0, 0.0) == pytest.approx(ABS_COS_3, rel=1e-12)

    @given(st.floats(-10, 10), st.floats(0, math.pi))
    @settings(max_examples=100, deadline=None)
    def test_range(self, a, b):
        assert 0.0 <= orient_confidence(a, b) <= 1.0


class TestInfer:
    def test_ground_truth_feed_scores_two(self):
        p = line_prob()
        orient = np.zeros_like(p)
        scored = infer(p, orient)
        on = scored.support()
        assert on.sum() == 10
        np.testing.assert_allclose(scored.total[on], 2.0)
        np.testing.assert_allclose(scored.edge_conf[on], 1.0)
        np.testing.assert_allclose(scored.orient_conf[on], 1.0)

    def test_perpendicular_orientation_gives_edge_only(self):
        p = line_prob()
        orient = np.full_like(p, math.pi / 2)
        scored = infer(p, orient)
        on = scored.support()
        np.testing.assert_allclose(scored.orient_conf[on], 0.0, atol=1e-9)
        np.testing.assert_allclose(scored.total[on], scored.edge_conf[on])

    def test_support_shared_and_ranges(self):
        rng = np.random.default_rng(6)
        from occlusia.raster import gaussian_smooth

        p = gaussian_smooth((rng.random((24, 24)) < 0.2) * 1.0, 1.0)
        p = p / max(p.max(), 1e-9)
        scored = infer(p, rng.uniform(-3, 3, p.shape))
        on = scored.support()
        assert np.all(np.isnan(scored.orient[~on]))
        assert np.all(~np.isnan(scored.orient[on]))
        np.testing.assert_array_equal(scored.orient_conf[~on], 0.0)
        np.testing.assert_array_equal(scored.total[~on], 0.0)
        assert np.all((0 <= scored.orient_conf) & (scored.orient_conf <= 1))
        assert np.all((0 <= scored.total) & (scored.total <= 2))
        np.testing.assert_allclose(
            scored.total, scored.edge_conf + scored.orient_conf, atol=1e-6)

    def test_aligned_orientation_snaps_to_tangent(self):
        p = line_prob()
        scored = infer(p, np.full_like(p, 0.3))
        field = estimate_tangents(scored.support().astype(np.uint8))
        on = scored.support()
        t = field.tangent[on]
        a = scored.orient[on]
        for ti, ai in zip(t, a):
            assert (
                abs(wrap(float(ai)) - wrap(float(ti))) < 1e-6
                or abs(wrap(float(ai)) - wrap(float(ti) + math.pi)) < 1e-6
            )

    def test_trained_net_output_validates(self):
        spec = SceneSpec(
            width=32, height=32, seed=5,
            shapes=[
                ShapeSpec("disk", {"cx": 12, "cy": 14, "r": 7}, "a"),
                ShapeSpec("disk", {"cx": 21, "cy": 19, "r": 8}, "b"),
            ],
        )
        sc = render(spec)
        cfg = TrainConfig(epochs=2, seed=7)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params, _ = train(cfg, [(sc.image, sc.gt)])
            scored, edge, orient = predict(params, sc.image)
        from occlusia.orientmap import OrientedBoundaryMap

        m = OrientedBoundaryMap(
            edge=scored.support().astype(np.float32),
            orient=scored.orient,
        )
        assert validate(m, ground_truth=True) == []
        on = scored.support()
        np.testing.assert_array_equal(scored.edge_conf > 0, on)
        np.testing.assert_array_equal(~np.isnan(scored.orient), on)


class TestMultiscale:
    def make_model(self, seed=8):
        return default_params(seed=seed)

    def test_single_scale_identical_to_forward(self):
        from occlusia.tinynet import forward

        params = self.make_model()
        img = np.random.default_rng(9).random((24, 24))
        e1, o1 = forward(params, img)
        e2, o2 = multiscale_average(params, img, scales=(1.0,))
        np.testing.assert_array_equal(e1, e2)
        np.testing.assert_allclose(wrap(o1), o2, atol=1e-12)

    def test_constant_model_average_is_constant(self):
        params = self.make_model()
        for group in (params.trunk, params.boundary_head,
                      params.orientation_head):
            for layer in group:
                layer.weight[:] = 0.0
                layer.bias[:] = 0.0
        params.orientation_head[-1].bias[:] = 0.9
        img = np.random.default_rng(10).random((40, 40))
        e, o = multiscale_average(params, img, scales=(0.5, 1.0, 1.5))
        np.testing.assert_allclose(e, 0.5, atol=1e-12)
        np.testing.assert_allclose(o, 0.9, atol=1e-9)

    def test_unit_vector_mean_handles_seam(self):
        angles = np.array([math.pi - 0.1, -math.pi + 0.1])
        mean = math.atan2(np.sin(angles).sum(), np.cos(angles).sum())
        assert abs(mean) == pytest.approx(math.pi)
        assert abs(mean) != pytest.approx(0.0)

    def test_small_scale_skipped_with_warning(self):
        params = self.make_model()
        img = np.random.default_rng(11).random((20, 20))
        with pytest.warns(UserWarning, match="receptive"):
            e, o = multiscale_average(params, img, scales=(0.25, 1.0))
        from occlusia.tinynet import forward

        e1, _ = forward(params, img)
        np.testing.assert_array_equal(e, e1)

    def test_all_scales_too_small_rejected(self):
        params = self.make_model()
        img = np.random.default_rng(12).random((20, 20))
        with pytest.raises(ValueError):
            with pytest.warns(UserWarning):
                multiscale_average(params, img, scales=(0.1,))


class TestTangentTransposition:
    def test_tangents_map_under_transposition(self):
        # junction-free staircase: tangent(edges.T) = (pi/2 - t) mod pi
        stair = [(11 - i, i) for i in range(12)] + [(0, 12), (0, 13)]
        edges = np.zeros((14, 14), dtype=np.uint8)
        for r, c in stair:
            edges[r, c] = 1
        t1 = estimate_tangents(edges).tangent
        t2 = estimate_tangents(edges.T.copy()).tangent
        on = edges == 1
        want = np.mod(math.pi / 2 - t1[on], math.pi)
        got = t2.T[on]
        d = np.abs(want - got)
        d = np.minimum(d, math.pi - d)
        assert np.max(d) < 1e-6


class TestScoredIO:
    def test_round_trip(self, tmp_path):
        p = line_prob()
        scored = infer(p, np.full_like(p, 0.2))
        prefix = str(tmp_path / "scored")
        save_scored(prefix, scored)
        back = load_scored(prefix)
        for field_name in ("edge_conf", "orient", "orient_conf", "total"):
            a = getattr(scored, field_name)
            b = getattr(back, field_name)
            np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
            np.testing.assert_array_equal(a[~np.isnan(a)], b[~np.isnan(b)])
