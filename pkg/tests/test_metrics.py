import numpy as np
import pytest

from oracles import iou_fraction, nvp_iou_fraction
from tabe.core import ValidationError
from tabe.metrics import (
    combine_reports,
    evaluate_sequence,
    gt_stats,
    iou,
    non_visible_pixel_iou,
)


def masks_from_sets(shape, *pixel_sets):
    out = []
    for pixels in pixel_sets:
        m = np.zeros(shape, bool)
        for u, v in pixels:
            m[v, u] = True
        out.append(m)
    return out


class TestIoU:
    def test_identical_nonempty(self):
        m = np.zeros((4, 4), bool)
        m[1:3, 1:3] = True
        assert iou(m, m.copy()) == 1.0

    def test_disjoint(self):
        a, b = masks_from_sets((4, 4), {(0, 0)}, {(3, 3)})
        assert iou(a, b) == 0.0

    def test_third_overlap(self):
        a, b = masks_from_sets((2, 2), {(0, 0), (0, 1)}, {(0, 1), (1, 1)})
        assert iou(a, b) == pytest.approx(1 / 3)

    def test_both_empty_skipped(self):
        z = np.zeros((3, 3), bool)
        assert iou(z, z.copy()) is None

    def test_symmetry_and_range(self, rng):
        for _ in range(200):
            a = rng.random((8, 8)) < 0.4
            b = rng.random((8, 8)) < 0.4
            x = iou(a, b)
            assert x == iou(b, a)
            if x is not None:
                assert 0.0 <= x <= 1.0

    def test_matches_pixel_set_oracle(self):
        for seed in range(1000):
            r = np.random.default_rng(seed)
            a = r.random((8, 8)) < r.uniform(0.05, 0.9)
            b = r.random((8, 8)) < r.uniform(0.05, 0.9)
            expected = iou_fraction(a, b)
            got = iou(a, b)
            if expected is None:
                assert got is None
            else:
                assert got == float(expected)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            iou(np.zeros((2, 2), bool), np.zeros((3, 3), bool))


class TestNonVisiblePixelIoU:
    def test_perfect_prediction(self):
        amodal = np.zeros((4, 4), bool)
        amodal[0:2, 0:2] = True
        visible = np.zeros((4, 4), bool)
        visible[0, 0] = True
        assert non_visible_pixel_iou(amodal.copy(), amodal, visible) == 1.0

    def test_prediction_equals_visible_scores_zero(self):
        amodal = np.zeros((4, 4), bool)
        amodal[0:2, 0:2] = True
        visible = np.zeros((4, 4), bool)
        visible[0, 0:2] = True
        assert non_visible_pixel_iou(visible.copy(), amodal, visible) == 0.0

    def test_set_algebra_example(self):
        # amodal {v1,v2,h1,h2}, visible {v1,v2}, pred {v1,v2,h1,spurious}
        amodal, visible, pred = masks_from_sets(
            (3, 4),
            {(0, 0), (1, 0), (2, 0), (3, 0)},
            {(0, 0), (1, 0)},
            {(0, 0), (1, 0), (2, 0), (0, 1)},
        )
        assert non_visible_pixel_iou(pred, amodal, visible) == pytest.approx(1 / 3)

    def test_no_hidden_pixels_skipped(self):
        amodal = np.zeros((3, 3), bool)
        amodal[1, 1] = True
        assert non_visible_pixel_iou(amodal.copy(), amodal, amodal.copy()) is None

    def test_invariant_to_pred_changes_on_visible_pixels(self, rng):
        amodal = rng.random((8, 8)) < 0.6
        visible = amodal & (rng.random((8, 8)) < 0.5)
        pred = rng.random((8, 8)) < 0.5
        flipped = pred.copy()
        flipped[visible] = ~flipped[visible]
        assert non_visible_pixel_iou(pred, amodal, visible) == non_visible_pixel_iou(
            flipped, amodal, visible
        )

    def test_visible_must_be_subset(self):
        amodal = np.zeros((3, 3), bool)
        visible = np.zeros((3, 3), bool)
        visible[0, 0] = True
        with pytest.raises(ValidationError, match="subset"):
            non_visible_pixel_iou(amodal.copy(), amodal, visible)

    def test_matches_set_oracle(self):
        for seed in range(1000):
            r = np.random.default_rng(seed + 5000)
            amodal = r.random((8, 8)) < r.uniform(0.1, 0.9)
            visible = amodal & (r.random((8, 8)) < 0.5)
            pred = r.random((8, 8)) < 0.4
            expected = nvp_iou_fraction(pred, amodal, visible)
            got = non_visible_pixel_iou(pred, amodal, visible)
            if expected is None:
                assert got is None
            else:
                assert got == float(expected)


def five_frame_sequence():
    """5 frames: one clean, two partial, one heavy, one fully occluded."""
    shape = (8, 8)
    amodal, visible = [], []
    for hidden_cols in (0, 1, 2, 3, 4):
        a = np.zeros(shape, bool)
        a[2:6, 2:6] = True  # 16 px object
        v = a.copy()
        v[:, 2 : 2 + hidden_cols] = False
        amodal.append(a)
        visible.append(v)
    return amodal, visible


class TestEvaluateSequence:
    def test_perfect_prediction_scores_one_everywhere(self):
        amodal, visible = five_frame_sequence()
        report = evaluate_sequence([a.copy() for a in amodal], amodal, visible)
        assert report.mean_iou == 1.0
        assert report.occlusion_iou == 1.0
        assert report.full_occlusion_iou == 1.0
        assert report.non_visible_pixel_iou == 1.0

    def test_categories(self):
        amodal, visible = five_frame_sequence()
        report = evaluate_sequence(amodal, amodal, visible)
        flags = [(f.occluded, f.heavily_occluded, f.fully_occluded) for f in report.frames]
        assert flags == [
            (False, False, False),
            (True, False, False),   # 4/16 hidden
            (True, False, False),   # 8/16 hidden: not strictly > 50%
            (True, True, False),    # 12/16 hidden
            (True, True, True),     # all hidden
        ]
        assert report.counts == {
            "frames": 5, "evaluated": 5, "occluded": 4,
            "heavily_occluded": 2, "fully_occluded": 1,
        }
        # the category chain holds on every frame
        for f in report.frames:
            assert (not f.fully_occluded) or f.heavily_occluded
            assert (not f.heavily_occluded) or f.occluded

    def test_correct_only_on_fully_occluded_frame(self):
        amodal, visible = five_frame_sequence()
        pred = [np.zeros((8, 8), bool) for _ in range(5)]
        pred[4] = amodal[4].copy()  # only the fully occluded frame is right
        report = evaluate_sequence(pred, amodal, visible)
        assert report.full_occlusion_iou == 1.0
        per_frame = [f.iou for f in report.frames]
        occluded_mean = np.mean([per_frame[i] for i in (1, 2, 3, 4)])
        assert report.occlusion_iou == pytest.approx(occluded_mean)

    def test_empty_gt_amodal_frames_excluded(self):
        z = np.zeros((4, 4), bool)
        o = np.zeros((4, 4), bool)
        o[1, 1] = True
        report = evaluate_sequence([o, o], [o, z], [o, z])
        assert report.counts["evaluated"] == 1
        assert report.mean_iou == 1.0
        assert report.frames[1].evaluated is False

    def test_occlusion_fraction_definition(self):
        amodal, visible = five_frame_sequence()
        report = evaluate_sequence(amodal, amodal, visible)
        for f, (a, v) in zip(report.frames, zip(amodal, visible)):
            assert f.occlusion_fraction == pytest.approx(1 - v.sum() / a.sum())


class TestAggregation:
    def test_gt_stats_counts(self):
        amodal, visible = five_frame_sequence()
        counts = gt_stats(amodal, visible)
        assert counts == {"frames": 5, "occluded": 4, "heavily_occluded": 2, "fully_occluded": 1}

    def test_combine_reports_reports_both_levels(self):
        amodal, visible = five_frame_sequence()
        r1 = evaluate_sequence(amodal, amodal, visible)
        pred = [np.zeros((8, 8), bool) for _ in range(5)]
        pred[0] = amodal[0].copy()
        r2 = evaluate_sequence(pred, amodal, visible)
        combined = combine_reports([r1, r2])
        assert set(combined) == {"mean_of_sequences", "pooled", "counts", "per_sequence"}
        assert combined["counts"]["sequences"] == 2
        assert combined["mean_of_sequences"]["mean_iou"] == pytest.approx(
            (r1.mean_iou + r2.mean_iou) / 2
        )
        all_ious = [f.iou for f in r1.frames + r2.frames if f.iou is not None]
        assert combined["pooled"]["mean_iou"] == pytest.approx(np.mean(all_ious))

    def test_absent_aggregates_are_none(self):
        # nothing occluded at all: occlusion aggregates must be absent
        a = np.zeros((4, 4), bool)
        a[1, 1] = True
        report = evaluate_sequence([a], [a], [a])
        assert report.occlusion_iou is None
        assert report.full_occlusion_iou is None
        assert report.non_visible_pixel_iou is None
        assert report.mean_iou == 1.0
