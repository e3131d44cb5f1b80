import numpy as np
import pytest

from dadetect.geometry import (
    DecodeOverflowError,
    LOG_SIZE_CAP,
    decode_deltas,
    encode_deltas,
    generate_anchors,
    iou,
    iou_matrix,
    match_detections,
    nms,
    validate_boxes,
)

from oracles import (
    iou_lattice,
    match_bruteforce,
    nms_bruteforce,
    random_boxes,
)


class TestIoU:
    def test_identical(self):
        assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0

    def test_quarter_overlap(self):
        # intersection 5x5=25, union 100+100-25=175
        assert iou((0, 0, 10, 10), (5, 5, 15, 15)) == pytest.approx(25 / 175)

    def test_symmetry_and_bounds(self, rng):
        a = random_boxes(rng, 40)
        b = random_boxes(rng, 40)
        mat_ab = iou_matrix(a, b)
        mat_ba = iou_matrix(b, a)
        assert np.array_equal(mat_ab, mat_ba.T)
        assert np.all(mat_ab >= 0) and np.all(mat_ab <= 1)
        self_iou = np.diag(iou_matrix(a, a))
        assert np.allclose(self_iou, 1.0)

    def test_matches_lattice_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = random_boxes(rng, 2, extent=30, max_size=15, integer=True)
            assert iou(a, b) == pytest.approx(iou_lattice(a, b), abs=1e-12)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            validate_boxes(np.array([[0, 0, 0, 10]]))
        with pytest.raises(ValueError):
            validate_boxes(np.array([[0, 0, np.inf, 10]]))


class TestDeltas:
    def test_identity(self):
        box = np.array([[3, 4, 13, 24]])
        assert np.allclose(encode_deltas(box, box), 0.0)

    def test_center_shift(self):
        d = encode_deltas([(0, 0, 10, 10)], [(5, 0, 15, 10)])[0]
        assert d == pytest.approx([0.5, 0, 0, 0])

    def test_double_width(self):
        d = encode_deltas([(0, 0, 10, 10)], [(-5, 0, 15, 10)])[0]
        assert d == pytest.approx([0, 0, np.log(2), 0])

    def test_decode_inverts_encode_examples(self):
        anchor = np.array([[0, 0, 10, 10]])
        out = decode_deltas(anchor, [(0.5, 0, 0, 0)])[0]
        assert out == pytest.approx([5, 0, 15, 10])
        assert np.allclose(decode_deltas(anchor, [(0, 0, 0, 0)])[0], anchor[0])

    def test_roundtrip_property(self):
        rng = np.random.default_rng(42)
        anchors = random_boxes(rng, 1000)
        targets = random_boxes(rng, 1000)
        back = decode_deltas(anchors, encode_deltas(anchors, targets))
        assert np.abs(back - targets).max() < 1e-5

    def test_overflow_rejected_and_clampable(self):
        anchor = [(0, 0, 10, 10)]
        bad = [(0, 0, LOG_SIZE_CAP + 0.1, 0)]
        with pytest.raises(DecodeOverflowError):
            decode_deltas(anchor, bad)
        clamped = decode_deltas(anchor, bad, clamp=True)[0]
        assert clamped[2] - clamped[0] == pytest.approx(10 * 1000 / 16)


class TestAnchors:
    def test_single_cell(self):
        aset = generate_anchors(1, 1, 16, [16], [1.0])
        assert len(aset) == 1
        assert aset.anchors[0] == pytest.approx([0, 0, 16, 16])

    def test_second_cell_offset(self):
        aset = generate_anchors(2, 1, 16, [16], [1.0])
        assert len(aset) == 2
        cx = (aset.anchors[1][0] + aset.anchors[1][2]) / 2
        cy = (aset.anchors[1][1] + aset.anchors[1][3]) / 2
        assert (cx, cy) == (8, 24)

    def test_aspect_is_area_preserving(self):
        aset = generate_anchors(1, 1, 16, [16], [4.0])
        box = aset.anchors[0]
        w, h = box[2] - box[0], box[3] - box[1]
        assert h / w == pytest.approx(4.0)
        assert w * h == pytest.approx(256.0)
        assert (w, h) == (pytest.approx(8.0), pytest.approx(32.0))

    def test_count_formula(self):
        for fh, fw, s, a in [(3, 5, 2, 3), (8, 8, 3, 3), (1, 7, 1, 1)]:
            aset = generate_anchors(fh, fw, 16, list(range(8, 8 + 8 * s, 8)), [0.5] * a)
            assert len(aset) == fh * fw * s * a

    def test_ordering_row_major_then_scale_then_aspect(self):
        aset = generate_anchors(2, 2, 16, [16, 32], [1.0, 2.0])
        # index = ((row*2+col)*2 + scale)*2 + aspect
        per_cell = aset.per_cell
        assert per_cell == 4
        first_cell = aset.anchors[:per_cell]
        centers = (first_cell[:, :2] + first_cell[:, 2:]) / 2
        assert np.allclose(centers, [[8, 8]] * per_cell)
        second_cell = aset.anchors[per_cell : 2 * per_cell]
        centers2 = (second_cell[:, :2] + second_cell[:, 2:]) / 2
        assert np.allclose(centers2, [[24, 8]] * per_cell)


class TestNms:
    def test_single_box(self):
        assert nms(np.array([[0, 0, 5, 5]]), np.array([0.7]), 0.5) == [0]

    def test_identical_boxes(self):
        boxes = np.array([[0, 0, 10, 10], [0, 0, 10, 10]])
        assert nms(boxes, np.array([0.9, 0.8]), 0.5) == [0]

    def test_equal_scores_tie_break(self):
        boxes = np.array([[0, 0, 10, 10], [1, 1, 11, 11]])
        assert nms(boxes, np.array([0.5, 0.5]), 0.3) == [0]

    def test_matches_bruteforce(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 51))
            boxes = random_boxes(rng, n, extent=60, max_size=30)
            scores = rng.uniform(0, 1, n)
            assert nms(boxes, scores, 0.5) == nms_bruteforce(boxes, scores, 0.5)


class TestMatchDetections:
    def test_single_exact(self):
        result = match_detections(
            [(0, 0, 10, 10)], [0.9], [1], [(0, 0, 10, 10)], [1]
        )
        assert result.true_positive.tolist() == [True]
        assert result.matched_gt.tolist() == [0]

    def test_duplicate_detection(self):
        result = match_detections(
            [(0, 0, 10, 10), (0, 0, 10, 10)], [0.9, 0.8], [1, 1], [(0, 0, 10, 10)], [1]
        )
        assert result.true_positive.tolist() == [True, False]
        assert result.gt_counts == {1: 1}

    def test_class_mismatch_is_fp(self):
        result = match_detections([(0, 0, 10, 10)], [0.9], [2], [(0, 0, 10, 10)], [1])
        assert not result.true_positive.any()

    def test_matches_bruteforce(self):
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            dets = random_boxes(rng, 10, extent=50, max_size=25)
            gts = random_boxes(rng, 5, extent=50, max_size=25)
            scores = rng.uniform(0, 1, 10)
            det_cls = rng.integers(1, 3, 10)
            gt_cls = rng.integers(1, 3, 5)
            got = match_detections(dets, scores, det_cls, gts, gt_cls, 0.5)
            want_tp, want_matched = match_bruteforce(dets, scores, det_cls, gts, gt_cls, 0.5)
            assert np.array_equal(got.true_positive, want_tp)
            assert np.array_equal(got.matched_gt, want_matched)

    def test_stable_under_equal_score_shuffle(self, rng):
        # Equal scores resolve by original index; re-running on the same
        # input order must reproduce the labeling exactly.
        dets = random_boxes(rng, 8, extent=40)
        scores = np.full(8, 0.5)
        classes = np.ones(8, dtype=int)
        gts = dets[:3] + 1.0
        gt_cls = np.ones(3, dtype=int)
        first = match_detections(dets, scores, classes, gts, gt_cls, 0.3)
        second = match_detections(dets, scores, classes, gts, gt_cls, 0.3)
        assert np.array_equal(first.true_positive, second.true_positive)
        assert np.array_equal(first.matched_gt, second.matched_gt)
