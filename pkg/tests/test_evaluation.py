import math

import pytest

from glimpsenet.evaluation import (CurvePoint, Detection, EvalCurve,
                                   GroundTruth, MatchParams, compute_curve,
                                   emit_curve, load_curve_csv,
                                   load_detections_jsonl,
                                   load_ground_truth_jsonl,
                                   log_average_miss_rate, match_image,
                                   save_detections_jsonl,
                                   save_ground_truth_jsonl)


def det(u, v, score, image="img"):
    return Detection(image_id=image, u=u, v=v, score=score)


class TestMatchImage:
    def test_exact_hit(self):
        assert match_image([det(10, 10, 0.9)], [(10, 10)]) == (1, 0, 0)

    def test_second_detection_becomes_fp(self):
        out = match_image([det(10, 10, 0.9), det(12, 10, 0.8)], [(10, 10)])
        assert out == (1, 1, 0)

    def test_no_detections(self):
        assert match_image([], [(5, 5), (9, 9)]) == (0, 0, 2)

    def test_outside_radius_is_fp(self):
        out = match_image([det(100, 100, 0.9)], [(10, 10)],
                          MatchParams(radius=25))
        assert out == (0, 1, 1)

    def test_nearest_truth_wins(self):
        out = match_image([det(10, 10, 0.9)], [(30, 10), (12, 10)],
                          MatchParams(radius=25))
        assert out == (1, 0, 1)

    def test_higher_score_matches_first(self):
        # both detections are nearest to the same truth; the higher score
        # claims it and the other takes the remaining one
        dets = [det(11, 10, 0.7), det(10, 10, 0.9)]
        assert match_image(dets, [(10, 10), (14, 10)]) == (2, 0, 0)

    def test_adaptive_radius_uses_depth(self):
        params = MatchParams(adaptive=True, fx=525.0)
        # at 2000 mm the radius is 33 px; at 8000 mm only 8 px
        near = match_image([det(30, 0, 0.9)], [(0, 0)], params,
                           depths=[2000])
        far = match_image([det(30, 0, 0.9)], [(0, 0)], params,
                          depths=[8000])
        assert near == (1, 0, 0)
        assert far == (0, 1, 1)

    def test_mixed_images_rejected(self):
        with pytest.raises(ValueError):
            match_image([det(1, 1, 0.5, "a"), det(2, 2, 0.5, "b")], [])

    def test_counts_are_consistent(self, rng):
        params = MatchParams(radius=10)
        for _ in range(200):
            n_d = rng.below(6)
            n_t = rng.below(4)
            dets = [det(rng.below(64), rng.below(64),
                        (rng.below(100) + 1) / 100.0) for _ in range(n_d)]
            truths = [(rng.below(64), rng.below(64)) for _ in range(n_t)]
            tp, fp, fn = match_image(dets, truths, params)
            assert tp + fp == n_d
            assert tp + fn == n_t


class TestComputeCurve:
    def test_perfect_detector(self):
        truths = [GroundTruth("a", ((10, 10),)), GroundTruth("b", ((5, 5),))]
        dets = [det(10, 10, 1.0, "a"), det(5, 5, 1.0, "b")]
        curve = compute_curve(dets, truths)
        assert len(curve.points) == 1
        assert curve.points[0].fppi == 0.0
        assert curve.points[0].miss_rate == 0.0

    def test_empty_detections_degenerate_point(self):
        truths = [GroundTruth("a", ((10, 10),))]
        curve = compute_curve([], truths)
        assert len(curve.points) == 1
        assert (curve.points[0].fppi, curve.points[0].miss_rate) == (0.0, 1.0)

    def test_two_image_hand_example(self):
        # image a: one truth, hit at score 0.9; image b: one truth, a
        # mislocated detection at score 0.8.
        #   threshold 0.9 -> fppi 0/2, miss 1/2
        #   threshold 0.8 -> fppi 1/2, miss 1/2
        truths = [GroundTruth("a", ((10, 10),)), GroundTruth("b", ((40, 40),))]
        dets = [det(10, 10, 0.9, "a"), det(200, 200, 0.8, "b")]
        curve = compute_curve(dets, truths)
        assert [(p.threshold, p.fppi, p.miss_rate) for p in curve.points] == \
            [(0.9, 0.0, 0.5), (0.8, 0.5, 0.5)]

    def test_zero_truths_rejected(self):
        with pytest.raises(ValueError):
            compute_curve([det(1, 1, 0.5)], [GroundTruth("img", ())])

    def test_monotone_properties(self, rng):
        for _ in range(60):
            images = [f"i{k}" for k in range(1 + rng.below(4))]
            truths = [GroundTruth(i, tuple((rng.below(50), rng.below(50))
                                           for _ in range(rng.below(3))))
                      for i in images]
            if not any(t.head_tops for t in truths):
                truths[0] = GroundTruth(images[0], ((1, 1),))
            dets = [det(rng.below(50), rng.below(50),
                        (rng.below(20) + 1) / 20.0,
                        images[rng.below(len(images))])
                    for _ in range(rng.below(12))]
            curve = compute_curve(dets, truths, MatchParams(radius=8))
            fppis = [p.fppi for p in curve.points]
            misses = [p.miss_rate for p in curve.points]
            assert fppis == sorted(fppis)
            for a, b in zip(misses, misses[1:]):
                assert b <= a + 1e-12
            assert misses[-1] <= misses[0]

    def test_tp_monotone_under_threshold(self, rng):
        # lowering the threshold never decreases matched truths
        truths = [GroundTruth("img", tuple((rng.below(40), rng.below(40))
                                           for _ in range(3)))]
        dets = [det(rng.below(40), rng.below(40), (k + 1) / 10.0)
                for k in range(10)]
        params = MatchParams(radius=12)
        prev_tp = -1
        for threshold in sorted({d.score for d in dets}, reverse=True):
            kept = [d for d in dets if d.score >= threshold]
            tp, _, _ = match_image(kept, list(truths[0].head_tops), params)
            assert tp >= prev_tp
            prev_tp = tp


class TestLogAverageMissRate:
    def test_constant_one(self):
        curve = EvalCurve(points=(CurvePoint(0.5, 0.0, 1.0),))
        assert log_average_miss_rate(curve) == 1.0

    def test_constant_zero_clamped(self):
        curve = EvalCurve(points=(CurvePoint(0.5, 0.0, 0.0),))
        assert log_average_miss_rate(curve) == pytest.approx(1e-4)

    def test_two_point_hand_enumeration(self):
        # samples below 0.5 use the (0.0, 0.5) point, the rest (0.5, 0.25);
        # sample grid is 10**(-2 + k/4), k = 0..8
        curve = EvalCurve(points=(CurvePoint(0.9, 0.0, 0.5),
                                  CurvePoint(0.8, 0.5, 0.25)))
        samples = [10.0 ** (-2.0 + 2.0 * k / 8.0) for k in range(9)]
        expected = math.exp(sum(
            math.log(0.25 if s >= 0.5 else 0.5) for s in samples) / 9.0)
        assert log_average_miss_rate(curve) == pytest.approx(expected,
                                                             rel=1e-12)

    def test_curve_starting_above_one_fppi(self):
        # no point at or below any sample smaller than the first fppi
        curve = EvalCurve(points=(CurvePoint(0.2, 2.0, 0.125),))
        assert log_average_miss_rate(curve) == pytest.approx(1.0)


class TestEmitCurve:
    def _curve(self):
        return EvalCurve(points=(CurvePoint(0.9, 0.0, 0.5),
                                 CurvePoint(0.8, 0.5, 0.25),
                                 CurvePoint(0.1, 1.25, 0.0)))

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "curve.csv"
        emit_curve(self._curve(), path, "csv")
        assert load_curve_csv(path) == self._curve()

    def test_svg_starts_with_svg_tag(self, tmp_path):
        path = tmp_path / "curve.svg"
        emit_curve(self._curve(), path, "svg")
        assert path.read_text().startswith("<svg")

    def test_empty_curve_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_curve(EvalCurve(points=()), tmp_path / "x.csv", "csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_curve(self._curve(), tmp_path / "x.png", "png")


class TestJsonl:
    def test_detections_round_trip(self, tmp_path):
        dets = [det(1, 2, 0.25, "a"), det(3, 4, 1.0, "b")]
        path = tmp_path / "dets.jsonl"
        save_detections_jsonl(path, dets)
        assert load_detections_jsonl(path) == dets

    def test_truth_round_trip(self, tmp_path):
        truths = [GroundTruth("a", ((1, 2), (3, 4))), GroundTruth("b", ())]
        path = tmp_path / "truth.jsonl"
        save_ground_truth_jsonl(path, truths)
        assert load_ground_truth_jsonl(path) == truths
