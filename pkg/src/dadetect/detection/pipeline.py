"""Shared forward passes for detector training and inference."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..geometry import clip_boxes, decode_deltas, nms
from .losses import DetectionLossBreakdown, detection_loss
from .model import DetectorNet, anchors_for_image
from .proposals import ProposalSet, propose
from .targets import RoiSample, rpn_targets, sample_rois


@dataclass
class TrainForward:
    """Everything one supervised forward produces, for loss and adaptation."""

    loss: DetectionLossBreakdown
    features: torch.Tensor
    proposals: ProposalSet
    roi_sample: RoiSample


def training_forward(
    model: DetectorNet,
    image: torch.Tensor,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    rng: np.random.Generator,
) -> TrainForward:
    """Run trunk + both heads on one labeled image and compute the loss."""
    cfg = model.cfg
    height, width = image.shape[-2:]
    features = model.extract_features(image)
    objectness, deltas = model.rpn_forward(features)
    anchor_set = anchors_for_image(cfg, height, width)

    proposals = propose(
        objectness.detach().cpu().numpy(),
        deltas.detach().cpu().numpy(),
        anchor_set,
        (height, width),
        pre_nms_top=cfg.pre_nms_top,
        nms_threshold=cfg.proposal_nms,
        min_size=cfg.proposal_min_size,
        top_k=cfg.proposals_per_image,
    )
    rpn_tgt = rpn_targets(
        anchor_set,
        gt_boxes,
        cfg.rpn_pos_iou,
        cfg.rpn_neg_iou,
        cfg.rpn_batch,
        cfg.rpn_pos_cap,
        rng,
    )
    roi_sample = sample_rois(
        proposals.boxes,
        gt_boxes,
        gt_classes,
        cfg.roi_batch,
        cfg.roi_fg_frac,
        cfg.roi_fg_iou,
        rng,
    )
    cls_logits, reg = model.roi_forward(features, roi_sample.boxes)
    loss = detection_loss(objectness, deltas, cls_logits, reg, rpn_tgt, roi_sample)
    return TrainForward(loss=loss, features=features, proposals=proposals, roi_sample=roi_sample)


def target_proposals(
    model: DetectorNet, image: torch.Tensor
) -> tuple[torch.Tensor, ProposalSet]:
    """Trunk features and top proposals for an unlabeled image."""
    cfg = model.cfg
    height, width = image.shape[-2:]
    features = model.extract_features(image)
    with torch.no_grad():
        objectness, deltas = model.rpn_forward(features)
    proposals = propose(
        objectness.cpu().numpy(),
        deltas.cpu().numpy(),
        anchors_for_image(cfg, height, width),
        (height, width),
        pre_nms_top=cfg.pre_nms_top,
        nms_threshold=cfg.proposal_nms,
        min_size=cfg.proposal_min_size,
        top_k=cfg.proposals_per_image,
    )
    return features, proposals


@dataclass
class Detection:
    """One scored box in original-image coordinates."""

    box: np.ndarray
    class_id: int
    score: float

    def to_dict(self) -> dict:
        return {
            "x1": float(self.box[0]),
            "y1": float(self.box[1]),
            "x2": float(self.box[2]),
            "y2": float(self.box[3]),
            "class_id": int(self.class_id),
            "score": float(self.score),
        }


def detect(
    model: DetectorNet,
    image: np.ndarray,
    score_thresh: float | None = None,
    nms_thresh: float | None = None,
    short_side: int | None = None,
) -> list[Detection]:
    """Full inference on one [0,1] float image array.

    The shorter side is rescaled to ``short_side`` (model config default)
    before the forward pass; output boxes are mapped back to the input
    scale, clipped to the image, and capped at the configured count.
    """
    cfg = model.cfg
    score_thresh = cfg.score_thresh if score_thresh is None else score_thresh
    nms_thresh = cfg.det_nms if nms_thresh is None else nms_thresh
    short_side = cfg.short_side if short_side is None else short_side

    height, width = image.shape[:2]
    scale = short_side / min(height, width)
    tensor = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()[None]
    if scale != 1.0:
        tensor = F.interpolate(
            tensor,
            size=(int(round(height * scale)), int(round(width * scale))),
            mode="bilinear",
            align_corners=False,
        )
    net_h, net_w = tensor.shape[-2:]

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            features = model.extract_features(tensor)
            objectness, deltas = model.rpn_forward(features)
            proposals = propose(
                objectness.cpu().numpy(),
                deltas.cpu().numpy(),
                anchors_for_image(cfg, net_h, net_w),
                (net_h, net_w),
                pre_nms_top=cfg.test_pre_nms_top,
                nms_threshold=cfg.proposal_nms,
                min_size=cfg.proposal_min_size,
                top_k=cfg.test_proposals,
            )
            cls_logits, reg = model.roi_forward(features, proposals.boxes)
            probs = torch.softmax(cls_logits, dim=1).cpu().numpy()
            reg = reg.cpu().numpy()
    finally:
        model.train(was_training)

    detections: list[Detection] = []
    for cls in range(1, cfg.num_classes + 1):
        scores = probs[:, cls]
        keep = scores >= score_thresh
        if not keep.any():
            continue
        boxes = decode_deltas(proposals.boxes[keep], reg[keep, cls - 1], clamp=True)
        boxes = clip_boxes(boxes, net_h, net_w)
        valid = ((boxes[:, 2] - boxes[:, 0]) > 1e-3) & ((boxes[:, 3] - boxes[:, 1]) > 1e-3)
        boxes, cls_scores = boxes[valid], scores[keep][valid]
        for idx in nms(boxes, cls_scores, nms_thresh):
            detections.append(
                Detection(box=boxes[idx] / scale, class_id=cls, score=float(cls_scores[idx]))
            )
    detections.sort(key=lambda d: -d.score)
    detections = detections[: cfg.max_dets]
    for det in detections:
        det.box = clip_boxes(det.box[None], height, width)[0]
    return [d for d in detections if d.box[2] > d.box[0] and d.box[3] > d.box[1]]


def detections_entry(image_id: str, detections: list[Detection]) -> dict:
    return {"image_id": image_id, "detections": [d.to_dict() for d in detections]}


def write_detections(entries: list[dict], path: Path) -> None:
    """One JSON object per line: {image_id, detections: [...]}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")
