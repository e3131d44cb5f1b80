import numpy as np
import pytest
import torch

from dadetect.data.styles import CLEAN
from dadetect.data.synth import generate_scene
from dadetect.detection.losses import detection_loss, smooth_l1
from dadetect.detection.model import DetectorNet, crop_and_resize
from dadetect.detection.pipeline import detect, target_proposals, training_forward
from dadetect.detection.proposals import propose
from dadetect.detection.targets import (
    RoiSample,
    RpnTargets,
    assign_roi_labels,
    assign_rpn_labels,
    rpn_targets,
    sample_rois,
)
from dadetect.geometry import generate_anchors
from dadetect.torchutil import image_to_tensor, seed_everything

from conftest import tiny_detector_config
from oracles import random_boxes, roi_labels_bruteforce, rpn_labels_bruteforce


@pytest.fixture(scope="module")
def det():
    seed_everything(0)
    return DetectorNet(tiny_detector_config())


class TestFeatures:
    def test_stride_16_shapes(self, det):
        feats = det.extract_features(torch.rand(1, 3, 128, 128))
        assert feats.shape[-2:] == (8, 8)
        feats = det.extract_features(torch.rand(1, 3, 96, 64))
        assert feats.shape[-2:] == (6, 4)

    def test_odd_dims_ceil(self, det):
        feats = det.extract_features(torch.rand(1, 3, 130, 50))
        assert feats.shape[-2:] == (9, 4)

    def test_eval_deterministic(self, det):
        det.eval()
        x = torch.rand(1, 3, 64, 64)
        with torch.no_grad():
            a = det.extract_features(x)
            b = det.extract_features(x)
        assert torch.equal(a, b)

    def test_translation_equivariance_one_cell(self, det):
        # Shifting the input by one stride shifts interior responses by one
        # cell (borders excluded).
        det.eval()
        rng = np.random.default_rng(0)
        base = rng.uniform(0, 1, (128 + 16, 128, 3)).astype(np.float32)
        img_a = base[:128]
        img_b = base[16 : 16 + 128]
        with torch.no_grad():
            fa = det.extract_features(image_to_tensor(img_a))[0]
            fb = det.extract_features(image_to_tensor(img_b))[0]
        interior_a = fa[:, 3:7, 2:6]
        interior_b = fb[:, 2:6, 2:6]
        corr = torch.nn.functional.cosine_similarity(
            interior_a.flatten(), interior_b.flatten(), dim=0
        )
        assert float(corr) > 0.98


class TestCropAndResize:
    def test_constant_feature_map(self):
        feats = torch.full((1, 2, 8, 8), 3.5)
        crops = crop_and_resize(feats, np.array([[16, 16, 64, 64.0]]), 16, 4)
        assert crops.shape == (1, 2, 4, 4)
        assert torch.allclose(crops, torch.tensor(3.5))

    def test_gradient_flows_to_features(self):
        feats = torch.rand(1, 2, 8, 8, requires_grad=True)
        crops = crop_and_resize(feats, np.array([[8, 8, 40, 40.0]]), 16, 4)
        crops.sum().backward()
        assert feats.grad is not None
        assert feats.grad.abs().sum() > 0

    def test_picks_correct_region(self):
        feats = torch.zeros(1, 1, 8, 8)
        feats[0, 0, 0, 0] = 1.0  # top-left cell only
        hot = crop_and_resize(feats, np.array([[0, 0, 16, 16.0]]), 16, 2)
        cold = crop_and_resize(feats, np.array([[96, 96, 128, 128.0]]), 16, 2)
        assert float(hot.sum()) > 0.5
        assert float(cold.sum()) == 0.0


class TestProposals:
    def _setup(self, n_anchors=36):
        aset = generate_anchors(2, 2, 16, [16, 32, 64], [0.5, 1.0, 2.0])
        rng = np.random.default_rng(0)
        logits = rng.normal(0, 1, len(aset))
        deltas = rng.normal(0, 0.1, (len(aset), 4))
        return aset, logits, deltas

    def test_contract(self):
        aset, logits, deltas = self._setup()
        props = propose(logits, deltas, aset, (32, 32), top_k=8)
        assert 0 < len(props) <= 8
        assert np.all(np.diff(props.scores) <= 0)
        assert np.all(props.boxes[:, 0] >= 0) and np.all(props.boxes[:, 2] <= 32)
        assert np.all(props.boxes[:, 2] > props.boxes[:, 0])

    def test_fallback_on_degenerate_decode(self):
        aset, logits, _ = self._setup()
        # Deltas that collapse every box below the size filter.
        deltas = np.zeros((len(aset), 4))
        deltas[:, 0] = 100.0  # push all boxes far outside, clipped to slivers
        props = propose(logits, deltas, aset, (32, 32), top_k=8, min_size=2.0)
        assert len(props) > 0

    def test_count_mismatch_raises(self):
        aset, logits, deltas = self._setup()
        with pytest.raises(ValueError):
            propose(logits[:-1], deltas, aset, (32, 32))


class TestTargets:
    def test_exact_anchor_positive_with_zero_delta(self):
        aset = generate_anchors(4, 4, 16, [32], [1.0])
        gt = aset.anchors[5:6].copy()
        rng = np.random.default_rng(0)
        tgt = rpn_targets(aset, gt, 0.7, 0.3, 64, 32, rng)
        assert tgt.labels[5] == 1
        assert np.allclose(tgt.deltas[5], 0.0)

    def test_zero_gt_all_background(self):
        aset = generate_anchors(4, 4, 16, [32], [1.0])
        rng = np.random.default_rng(0)
        tgt = rpn_targets(aset, np.zeros((0, 4)), 0.7, 0.3, 8, 4, rng)
        assert not (tgt.labels == 1).any()
        assert (tgt.labels == 0).sum() == 8

    def test_rpn_labels_match_bruteforce(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            anchors = random_boxes(rng, 30, extent=100, max_size=40)
            gts = random_boxes(rng, int(rng.integers(1, 5)), extent=100, max_size=40)
            got, _ = assign_rpn_labels(anchors, gts, 0.7, 0.3)
            want = rpn_labels_bruteforce(anchors, gts, 0.7, 0.3)
            assert np.array_equal(got, want)

    def test_roi_labels_match_bruteforce(self):
        for seed in range(100):
            rng = np.random.default_rng(seed + 500)
            cands = random_boxes(rng, 20, extent=100, max_size=40)
            gts = random_boxes(rng, 4, extent=100, max_size=40)
            classes = rng.integers(1, 4, 4)
            got, _ = assign_roi_labels(cands, gts, classes, 0.5)
            want = roi_labels_bruteforce(cands, gts, classes, 0.5)
            assert np.array_equal(got, want)

    def test_sample_rois_ratio_and_gt_injection(self):
        rng = np.random.default_rng(1)
        proposals = random_boxes(rng, 30, extent=100, max_size=30)
        gts = np.array([[10.0, 10, 40, 40]])
        classes = np.array([2])
        sample = sample_rois(proposals, gts, classes, 16, 0.25, 0.5, rng)
        assert len(sample.boxes) == 16
        assert sample.foreground.sum() >= 1  # the injected GT at least
        assert sample.foreground.sum() <= 4
        fg_rows = np.where(sample.foreground)[0]
        assert np.all(sample.labels[fg_rows] == 2)

    def test_sample_rois_zero_gt(self):
        rng = np.random.default_rng(2)
        proposals = random_boxes(rng, 10, extent=100, max_size=30)
        sample = sample_rois(proposals, np.zeros((0, 4)), np.zeros(0, int), 8, 0.25, 0.5, rng)
        assert (sample.labels == 0).all()


class TestDetectionLoss:
    def _toy_outputs(self, n_anchors=12, n_roi=8, m=3):
        torch.manual_seed(0)
        rpn_obj = torch.randn(n_anchors, requires_grad=True)
        rpn_dlt = torch.randn(n_anchors, 4, requires_grad=True)
        roi_cls = torch.randn(n_roi, m + 1, requires_grad=True)
        roi_reg = torch.randn(n_roi, m, 4, requires_grad=True)
        return rpn_obj, rpn_dlt, roi_cls, roi_reg

    def test_smooth_l1_values(self):
        x = torch.tensor([0.5, 2.0, -0.5, -2.0])
        assert smooth_l1(x).tolist() == [0.125, 1.5, 0.125, 1.5]

    def test_all_background_zeroes_localization(self):
        rpn_obj, rpn_dlt, roi_cls, roi_reg = self._toy_outputs()
        rpn_tgt = RpnTargets(labels=np.zeros(12, dtype=np.int64), deltas=np.zeros((12, 4)))
        roi = RoiSample(
            boxes=np.tile([0, 0, 10, 10.0], (8, 1)),
            labels=np.zeros(8, dtype=np.int64),
            deltas=np.zeros((8, 4)),
        )
        breakdown = detection_loss(rpn_obj, rpn_dlt, roi_cls, roi_reg, rpn_tgt, roi)
        assert breakdown.loc_det == 0.0
        assert breakdown.loc_rpn == 0.0

    def test_uniform_classifier_ln4(self):
        rpn_obj, rpn_dlt, _, roi_reg = self._toy_outputs(n_roi=1)
        roi_cls = torch.zeros(1, 4)  # uniform softmax over m+1 = 4 classes
        rpn_tgt = RpnTargets(labels=np.zeros(12, dtype=np.int64), deltas=np.zeros((12, 4)))
        roi = RoiSample(
            boxes=np.array([[0, 0, 10, 10.0]]),
            labels=np.array([1]),
            deltas=np.zeros((1, 4)),
        )
        breakdown = detection_loss(rpn_obj, rpn_dlt, roi_cls, roi_reg[:1], rpn_tgt, roi)
        assert breakdown.cls_det == pytest.approx(np.log(4.0), abs=1e-6)

    def test_composition_identity(self):
        rpn_obj, rpn_dlt, roi_cls, roi_reg = self._toy_outputs()
        labels = np.array([1, 0, -1] * 4)
        rpn_tgt = RpnTargets(labels=labels, deltas=np.random.default_rng(0).normal(0, 0.2, (12, 4)))
        roi = RoiSample(
            boxes=random_boxes(np.random.default_rng(1), 8, extent=100),
            labels=np.array([1, 2, 0, 0, 3, 0, 0, 0]),
            deltas=np.random.default_rng(2).normal(0, 0.2, (8, 4)),
        )
        b = detection_loss(rpn_obj, rpn_dlt, roi_cls, roi_reg, rpn_tgt, roi)
        assert float(b.total.detach()) == pytest.approx(
            b.cls_det + b.loc_det + b.cls_rpn + b.loc_rpn, abs=1e-6
        )
        assert b.det == b.cls_det + b.loc_det + b.cls_rpn + b.loc_rpn


class TestEndToEnd:
    def test_training_forward_runs_and_softmax_sums(self, det):
        record = generate_scene(3, CLEAN, size=(64, 64), object_count=(1, 2))
        rng = np.random.default_rng(0)
        fwd = training_forward(
            det, image_to_tensor(record.image), record.boxes, record.class_ids, rng
        )
        assert np.isfinite(float(fwd.loss.total))
        assert len(fwd.roi_sample.boxes) == det.cfg.roi_batch
        cls_logits, _ = det.roi_forward(fwd.features, fwd.roi_sample.boxes)
        probs = torch.softmax(cls_logits, dim=1)
        assert torch.allclose(probs.sum(dim=1), torch.ones(len(probs)), atol=1e-6)

    def test_untrained_detect_contract(self, det):
        record = generate_scene(4, CLEAN, size=(64, 64))
        dets = detect(det, record.image, score_thresh=0.0)
        assert len(dets) <= det.cfg.max_dets
        for d in dets:
            assert 0 <= d.box[0] < d.box[2] <= 64
            assert 0 <= d.box[1] < d.box[3] <= 64
            assert 1 <= d.class_id <= 3
            assert 0 <= d.score <= 1

    def test_target_proposals_requires_no_labels(self, det):
        record = generate_scene(5, CLEAN, size=(64, 64)).without_labels()
        feats, props = target_proposals(det, image_to_tensor(record.image))
        assert len(props) > 0
        # Trunk features stay connected to the graph (the adaptation loss
        # must reach the trunk); the proposal head ran detached.
        assert feats.requires_grad
