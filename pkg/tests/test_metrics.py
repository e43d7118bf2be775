import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowdmot.metrics import (
    CurveConfig,
    EmptyGT,
    MetricsReport,
    TrackScore,
    auc,
    evaluate_video,
    match_tracks_to_gt,
    mean_track_iou,
    precision_at,
    precision_curve,
    score_track,
    success_curve,
    tracc,
)
from crowdmot.model import (
    SplitEvent,
    VideoMismatch,
    center_distance,
    interpolate_box,
    iou,
    lifetime,
)

from conftest import aset, bb, make_track, static_track


class TestCurveConfig:
    def test_default_grids(self):
        cfg = CurveConfig()
        assert len(cfg.iou_thresholds) == 101
        assert cfg.iou_thresholds[0] == 0.0 and cfg.iou_thresholds[-1] == 1.0
        assert len(cfg.dist_thresholds) == 51
        assert cfg.dist_thresholds[-1] == 50.0
        assert cfg.cutoff_index == 20

    def test_cutoff_must_be_on_grid(self):
        with pytest.raises(ValueError):
            CurveConfig(precision_cutoff=19.5)


class TestSuccessCurve:
    def test_exact_match(self):
        t = make_track("t", [(0, 0, 0, 10, 10), (99, 90, 0, 10, 10)])
        curve = success_curve(t, t)
        assert curve[:100] == (1.0,) * 100  # strict inequality: IoU 1 > t for t < 1
        assert curve[100] == 0.0

    def test_disjoint_everywhere(self):
        gt = static_track("g", 0, 99, bb(0, 0, 10, 10))
        far = static_track("p", 0, 99, bb(500, 500, 10, 10))
        assert success_curve(far, gt) == (0.0,) * 101

    def test_half_coverage(self):
        gt = static_track("g", 0, 99, bb(0, 0, 10, 10))
        half = static_track("p", 0, 49, bb(0, 0, 10, 10))
        curve = success_curve(half, gt)
        # covers 50 of 100 gt frames perfectly
        assert curve[:100] == (0.5,) * 100
        assert curve[100] == 0.0


class TestAuc:
    def test_perfect_curve(self):
        t = static_track("t", 0, 49, bb(0, 0, 10, 10))
        assert auc(success_curve(t, t)) == pytest.approx(100 / 101, abs=1e-12)

    def test_all_zero(self):
        assert auc((0.0,) * 101) == 0.0

    def test_half_coverage(self):
        gt = static_track("g", 0, 99, bb(0, 0, 10, 10))
        half = static_track("p", 0, 49, bb(0, 0, 10, 10))
        assert auc(success_curve(half, gt)) == pytest.approx(50 / 101, abs=1e-12)


class TestTracc:
    def test_identity(self):
        t = static_track("t", 0, 79, bb(0, 0, 10, 10))
        assert tracc(t, t) == 1.0

    def test_counting(self):
        gt = static_track("g", 0, 79, bb(0, 0, 10, 10))   # 80 frames
        pred = static_track("p", 0, 39, bb(0, 0, 10, 10))  # overlaps 40 of them
        assert tracc(pred, gt) == 0.5

    def test_no_prediction_overlap(self):
        gt = static_track("g", 0, 79, bb(0, 0, 10, 10))
        pred = static_track("p", 0, 79, bb(900, 900, 10, 10))
        assert tracc(pred, gt) == 0.0

    def test_equals_success_curve_at_zero_exactly(self):
        gt = make_track("g", [(0, 0, 0, 10, 10), (60, 50, 30, 12, 12)])
        pred = make_track("p", [(0, 1, 2, 9, 9), (60, 52, 28, 12, 13)])
        assert tracc(pred, gt) == success_curve(pred, gt)[0]


class TestPrecision:
    def test_identical_centers(self):
        t = static_track("t", 0, 49, bb(10, 10, 20, 20))
        curve = precision_curve(t, t)
        assert precision_at(curve, 20.0) == 1.0
        assert curve[0] == 1.0  # distance 0 is within threshold 0 (inclusive)

    def test_constant_offset_25(self):
        gt = static_track("g", 0, 49, bb(0, 0, 10, 10))
        pred = static_track("p", 0, 49, bb(25, 0, 10, 10))
        curve = precision_curve(pred, gt)
        assert precision_at(curve, 20.0) == 0.0
        assert precision_at(curve, 25.0) == 1.0

    def test_absent_prediction(self):
        gt = static_track("g", 0, 49, bb(0, 0, 10, 10))
        pred = static_track("p", 200, 260, bb(0, 0, 10, 10))  # no shared frames
        assert precision_curve(pred, gt) == (0.0,) * 51


class TestMatching:
    def test_recovers_shuffled_identities(self):
        g1 = static_track("g1", 0, 99, bb(0, 0, 10, 10))
        g2 = static_track("g2", 0, 99, bb(0, 100, 10, 10))
        g3 = static_track("g3", 0, 99, bb(0, 200, 10, 10))
        p_for_g3 = static_track("x", 0, 99, bb(0, 201, 10, 10))
        p_for_g1 = static_track("y", 0, 99, bb(1, 0, 10, 10))
        p_for_g2 = static_track("z", 0, 99, bb(0, 99, 10, 10))
        matching = match_tracks_to_gt(
            aset("v", p_for_g3, p_for_g1, p_for_g2), aset("v", g1, g2, g3)
        )
        assert matching == {"g1": "y", "g2": "z", "g3": "x"}

    def test_empty_pred(self):
        gt = aset("v", static_track("g", 0, 9, bb(0, 0, 5, 5)))
        assert match_tracks_to_gt(aset("v"), gt) == {"g": None}

    def test_spurious_pred_unmatched(self):
        g = static_track("g", 0, 99, bb(0, 0, 10, 10))
        good = static_track("p", 0, 99, bb(0, 1, 10, 10))
        spurious = static_track("s", 0, 99, bb(700, 700, 10, 10))
        matching = match_tracks_to_gt(aset("v", good, spurious), aset("v", g))
        assert matching == {"g": "p"}

    def test_zero_overlap_is_unmatched_even_if_assigned(self):
        g1 = static_track("g1", 0, 9, bb(0, 0, 10, 10))
        g2 = static_track("g2", 0, 9, bb(0, 100, 10, 10))
        only = static_track("p", 0, 9, bb(0, 101, 10, 10))  # near g2 only
        matching = match_tracks_to_gt(aset("v", only), aset("v", g1, g2))
        assert matching == {"g1": None, "g2": "p"}


class TestEvaluateVideo:
    def test_identity_means(self):
        tracks = [static_track(f"t{i}", 0, 199, bb(0, 30 * i, 10, 10)) for i in range(4)]
        gt = aset("v", *tracks)
        report = evaluate_video(gt, gt)
        assert report.mean_tracc == 1.0
        assert report.mean_precision20 == 1.0
        assert report.mean_auc == pytest.approx(100 / 101, abs=1e-9)
        assert report.matched_count == 4 and report.unmatched_count == 0

    def test_empty_pred_scores_zero(self):
        gt = aset("v", static_track("g", 0, 9, bb(0, 0, 5, 5)))
        report = evaluate_video(aset("v"), gt)
        assert report.mean_auc == 0.0
        assert report.mean_tracc == 0.0
        assert report.mean_precision20 == 0.0
        assert report.unmatched_count == 1

    def test_video_mismatch(self):
        with pytest.raises(VideoMismatch):
            evaluate_video(aset("a"), aset("b"))

    def test_missed_split_scores_parent_full_children_zero(self):
        parent = make_track(
            "p", [(0, 0, 0, 10, 10), (99, 0, 0, 10, 10)], label="1",
            split=SplitEvent(100, ("c1", "c2")),
        )
        c1 = static_track("c1", 100, 199, bb(0, -20, 8, 8), label="1-1", parent_id="p")
        c2 = static_track("c2", 100, 199, bb(0, 20, 8, 8), label="1-2", parent_id="p")
        gt = aset("v", parent, c1, c2)
        # prediction never saw the split: one long track following the parent
        # then child c1's area
        pred = make_track(
            "x", [(0, 0, 0, 10, 10), (99, 0, 0, 10, 10), (100, 0, -20, 8, 8), (199, 0, -20, 8, 8)]
        )
        report = evaluate_video(aset("v", pred), gt)
        assert report.per_track["p"].tracc == 1.0
        assert report.per_track["c1"].tracc == 0.0
        assert report.per_track["c2"].tracc == 0.0
        assert report.matched_count == 1 and report.unmatched_count == 2

    def test_matches_brute_force_recomputation(self):
        """Scalar per-frame recomputation with the model primitives."""
        rng = np.random.default_rng(77)
        cfg = CurveConfig()
        for trial in range(5):
            n_tracks = int(rng.integers(1, 6))
            gt_tracks, pred_tracks = [], []
            for i in range(n_tracks):
                frames = sorted(rng.choice(np.arange(0, 200), size=4, replace=False))
                y = 120.0 * i
                gt_tracks.append(
                    make_track(
                        f"g{i}",
                        [(int(f), float(rng.uniform(0, 50)), y, 10 + i, 12) for f in frames],
                        label=str(i + 1),
                    )
                )
                if rng.random() < 0.8:  # some gt tracks go unannotated
                    pf = sorted(rng.choice(np.arange(0, 200), size=3, replace=False))
                    pred_tracks.append(
                        make_track(
                            f"p{i}",
                            [
                                (int(f), float(rng.uniform(0, 50)), y + float(rng.uniform(-3, 3)), 10 + i, 12)
                                for f in pf
                            ],
                            label=str(i + 1),
                        )
                    )
            gt = aset("v", *gt_tracks)
            pred = aset("v", *pred_tracks)
            report = evaluate_video(pred, gt, cfg)

            # brute force: same matching rule, scalar primitives per frame
            matching = match_tracks_to_gt(pred, gt)
            pred_by_id = pred.by_id()
            aucs, traccs, precs = [], [], []
            for g in gt.tracks:
                pid = matching[g.id]
                if pid is None:
                    aucs.append(0.0), traccs.append(0.0), precs.append(0.0)
                    continue
                p = pred_by_id[pid]
                lo, hi = lifetime(g)
                p_lo, p_hi = lifetime(p)
                ious, dists = [], []
                for f in range(lo, hi + 1):
                    gb = interpolate_box(g, f)
                    if p_lo <= f <= p_hi:
                        pb = interpolate_box(p, f)
                        ious.append(iou(pb, gb))
                        dists.append(center_distance(pb, gb))
                    else:
                        ious.append(0.0)
                        dists.append(math.inf)
                n = len(ious)
                s_curve = [sum(1 for v in ious if v > t) / n for t in cfg.iou_thresholds]
                p_curve = [sum(1 for d in dists if d <= t) / n for t in cfg.dist_thresholds]
                aucs.append(sum(s_curve) / len(s_curve))
                traccs.append(s_curve[0])
                precs.append(p_curve[cfg.cutoff_index])
            assert report.mean_auc == pytest.approx(sum(aucs) / len(aucs), abs=1e-12)
            assert report.mean_tracc == pytest.approx(sum(traccs) / len(traccs), abs=1e-12)
            assert report.mean_precision20 == pytest.approx(sum(precs) / len(precs), abs=1e-12)


class TestCurveProperties:
    @given(seed=st.integers(0, 5000))
    @settings(max_examples=60, deadline=None)
    def test_monotonicity_and_auc_bound(self, seed):
        rng = np.random.default_rng(seed)
        gt = make_track(
            "g",
            [(0, 0, 0, 20, 20), (50, float(rng.uniform(-40, 40)), float(rng.uniform(-40, 40)), 20, 20)],
        )
        pred = make_track(
            "p",
            [
                (int(rng.integers(0, 20)), float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10)), 20, 20),
                (50, float(rng.uniform(-40, 40)), float(rng.uniform(-40, 40)), 18, 22),
            ],
        )
        s_curve = success_curve(pred, gt)
        p_curve = precision_curve(pred, gt)
        assert all(a >= b for a, b in zip(s_curve, s_curve[1:]))   # non-increasing
        assert all(a <= b for a, b in zip(p_curve, p_curve[1:]))   # non-decreasing
        assert auc(s_curve) <= tracc(pred, gt) + 1e-12
        assert tracc(pred, gt) == s_curve[0]

    @given(dx=st.floats(-500, 500, allow_nan=False), dy=st.floats(-500, 500, allow_nan=False))
    @settings(max_examples=40, deadline=None)
    def test_rigid_translation_invariance(self, dx, dy):
        def shifted(track, ddx, ddy):
            return make_track(
                track.id,
                [(kf.frame, kf.box.x + ddx, kf.box.y + ddy, kf.box.w, kf.box.h) for kf in track.key_frames],
            )

        gt = make_track("g", [(0, 0, 0, 20, 20), (60, 30, 10, 24, 18)])
        pred = make_track("p", [(0, 2, 1, 19, 21), (60, 28, 12, 25, 17)])
        base = score_track(pred, gt)
        moved = score_track(shifted(pred, dx, dy), shifted(gt, dx, dy))
        assert moved.auc == pytest.approx(base.auc, abs=1e-9)
        assert moved.tracc == pytest.approx(base.tracc, abs=1e-9)
        assert moved.precision20 == pytest.approx(base.precision20, abs=1e-9)
