import json

import numpy as np
import pytest

from facekit.detections import (
    BoundingBox,
    Detection,
    Landmark,
    detections_from_json,
    detections_to_json,
    group_rectangles,
    iou,
    nms_blend,
    nms_hard,
)


def random_box(rng):
    x, y = rng.uniform(0, 50, 2)
    w, h = rng.uniform(1, 30, 2)
    return BoundingBox(x, y, w, h)


class TestIou:
    def test_identical(self):
        b = BoundingBox(3, 4, 10, 5)
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 2, 2), BoundingBox(5, 5, 2, 2)) == 0.0

    def test_partial_overlap(self):
        # intersection 1, union 4 + 4 - 1 = 7
        v = iou(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2))
        assert v == pytest.approx(1 / 7)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == pytest.approx(iou(b, a))
            assert 0.0 <= iou(a, b) <= 1.0


class TestNmsHard:
    def test_empty(self):
        assert nms_hard([], 0.5) == []

    def test_single(self):
        d = Detection(BoundingBox(0, 0, 2, 2), 0.7)
        assert nms_hard([d], 0.5) == [d]

    def test_duplicate_suppressed(self):
        box = BoundingBox(0, 0, 2, 2)
        dets = [Detection(box, 0.9), Detection(box, 0.8)]
        assert nms_hard(dets, 0.5) == [dets[0]]

    def test_output_subset_and_separated(self):
        rng = np.random.default_rng(6)
        dets = [Detection(random_box(rng), rng.uniform(0.01, 1.0)) for _ in range(40)]
        out = nms_hard(dets, 0.4)
        assert all(d in dets for d in out)
        for i, a in enumerate(out):
            for b in out[i + 1 :]:
                assert iou(a.box, b.box) <= 0.4

    def test_permutation_invariant(self):
        rng = np.random.default_rng(7)
        scores = rng.permutation(np.linspace(0.1, 0.9, 20))  # distinct scores
        dets = [Detection(random_box(rng), float(s)) for s in scores]
        out_a = nms_hard(dets, 0.5)
        out_b = nms_hard(dets[::-1], 0.5)
        assert set(out_a) == set(out_b)


class TestNmsBlend:
    def test_single(self):
        d = Detection(BoundingBox(1, 2, 3, 4), 0.5)
        assert nms_blend([d], 0.3) == [d]

    def test_identical_boxes_blend_to_same_box(self):
        box = BoundingBox(5, 5, 10, 10)
        dets = [Detection(box, 0.9), Detection(box, 0.1)]
        out = nms_blend(dets, 0.3)
        assert len(out) == 1
        assert out[0].box == box
        assert out[0].score == 0.9  # seed score kept

    def test_weighted_mean_x(self):
        # (0 * 0.6 + 10 * 0.2) / 0.8 = 2.5
        a = Detection(BoundingBox(0, 0, 100, 100), 0.6)
        b = Detection(BoundingBox(10, 0, 100, 100), 0.2)
        out = nms_blend([a, b], 0.3)
        assert len(out) == 1
        assert out[0].box.x == pytest.approx(2.5)

    def test_output_within_convex_hull(self):
        rng = np.random.default_rng(8)
        dets = [Detection(random_box(rng), rng.uniform(0.01, 1.0)) for _ in range(30)]
        out = nms_blend(dets, 0.5)
        los = [min(d.box.x for d in dets), min(d.box.y for d in dets)]
        his = [max(d.box.x2 for d in dets), max(d.box.y2 for d in dets)]
        for d in out:
            assert los[0] - 1e-9 <= d.box.x and d.box.x2 <= his[0] + 1e-9
            assert los[1] - 1e-9 <= d.box.y and d.box.y2 <= his[1] + 1e-9

    def test_duplication_invariant(self):
        rng = np.random.default_rng(9)
        dets = [Detection(random_box(rng), rng.uniform(0.01, 1.0)) for _ in range(10)]
        out_once = nms_blend(dets, 0.4)
        out_twice = nms_blend(dets + dets, 0.4)
        assert len(out_once) == len(out_twice)
        for a, b in zip(out_once, out_twice):
            assert a.box.x == pytest.approx(b.box.x)
            assert a.box.w == pytest.approx(b.box.w)

    def test_landmarks_blended(self):
        lm_a = (Landmark("nose_tip", 0.0, 0.0),)
        lm_b = (Landmark("nose_tip", 10.0, 0.0),)
        a = Detection(BoundingBox(0, 0, 10, 10), 0.6, lm_a)
        b = Detection(BoundingBox(0, 0, 10, 10), 0.2, lm_b)
        out = nms_blend([a, b], 0.3)
        assert out[0].landmarks[0].x == pytest.approx(2.5)


class TestGroupRectangles:
    def test_single_box_kept(self):
        box = BoundingBox(1, 2, 10, 10)
        out = group_rectangles([box], min_neighbors=0)
        assert len(out) == 1
        assert out[0].box == box
        assert out[0].score == 1.0

    def test_single_box_dropped_by_neighbor_rule(self):
        assert group_rectangles([BoundingBox(1, 2, 10, 10)], min_neighbors=3) == []

    def test_three_near_identical_boxes_average(self):
        boxes = [BoundingBox(x, 20, 30, 30) for x in (10, 11, 12)]
        out = group_rectangles(boxes, min_neighbors=2, eps=0.2)
        assert len(out) == 1
        assert out[0].box.x == pytest.approx(11.0)
        assert out[0].box.w == pytest.approx(30.0)

    def test_identity_on_singletons(self):
        boxes = [BoundingBox(0, 0, 5, 5), BoundingBox(100, 100, 5, 5)]
        out = group_rectangles(boxes, min_neighbors=0, eps=0.2)
        assert [d.box for d in out] == boxes


class TestJsonRoundTrip:
    def test_schema(self):
        det = Detection(BoundingBox(1, 2, 3, 4), 0.5, (Landmark("left_eye", 1.5, 2.5),))
        rec = json.loads(detections_to_json([det]))[0]
        assert set(rec) == {"x", "y", "w", "h", "score", "landmarks"}
        assert rec["landmarks"][0] == {"name": "left_eye", "x": 1.5, "y": 2.5}

    def test_round_trip(self):
        dets = [
            Detection(BoundingBox(1, 2, 3, 4), 0.5, (Landmark("nose_tip", 0.0, 9.0),)),
            Detection(BoundingBox(5, 6, 7, 8), 1.0),
        ]
        assert detections_from_json(detections_to_json(dets)) == dets

    def test_numpy_scalars_serialize(self):
        import numpy as np

        det = Detection(
            BoundingBox(np.float32(1), np.float32(2), np.float32(3), np.float32(4)),
            np.float64(0.25),
            (Landmark("nose_tip", np.float32(1.5), np.float32(2.5)),),
        )
        rec = json.loads(detections_to_json([det]))[0]
        assert rec["x"] == 1.0 and rec["score"] == 0.25
        assert all(isinstance(v, float) for v in (rec["x"], rec["y"], rec["w"], rec["h"]))


class TestValidation:
    def test_bad_score(self):
        with pytest.raises(ValueError):
            Detection(BoundingBox(0, 0, 1, 1), 1.5)

    def test_duplicate_landmark(self):
        with pytest.raises(ValueError):
            Detection(
                BoundingBox(0, 0, 1, 1),
                0.5,
                (Landmark("nose_tip", 0, 0), Landmark("nose_tip", 1, 1)),
            )

    def test_degenerate_box(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 1)
