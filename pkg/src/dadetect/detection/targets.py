"""Training-target assignment for the proposal and region heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import AnchorSet, encode_deltas, iou_matrix


@dataclass
class RpnTargets:
    """Per-anchor labels after subsampling: 1 positive, 0 negative,
    -1 ignored. ``deltas`` rows are valid where ``labels == 1``."""

    labels: np.ndarray
    deltas: np.ndarray


@dataclass
class RoiSample:
    """A fixed-size minibatch of region proposals with targets.

    ``labels`` are 0 (background) or the ground-truth class in 1..m;
    ``deltas`` rows are valid where ``labels > 0``.
    """

    boxes: np.ndarray
    labels: np.ndarray
    deltas: np.ndarray

    @property
    def foreground(self) -> np.ndarray:
        return self.labels > 0


def assign_rpn_labels(
    anchors: np.ndarray,
    gt_boxes: np.ndarray,
    pos_iou: float = 0.7,
    neg_iou: float = 0.3,
) -> tuple[np.ndarray, np.ndarray]:
    """Label anchors 1/0/-1 (positive/negative/ignore) against ground truth.

    Positives are anchors with IoU >= ``pos_iou`` to some ground-truth box,
    plus every anchor tying the best IoU for a ground-truth box (so each GT
    owns at least one positive). Negatives fall below ``neg_iou`` to all.
    Also returns each anchor's best-IoU ground-truth index.
    """
    n = len(anchors)
    if len(gt_boxes) == 0:
        return np.zeros(n, dtype=np.int64), np.full(n, -1, dtype=np.int64)
    ious = iou_matrix(anchors, gt_boxes)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(n), best_gt]

    labels = np.full(n, -1, dtype=np.int64)
    labels[best_iou < neg_iou] = 0
    labels[best_iou >= pos_iou] = 1
    for g in range(len(gt_boxes)):
        top = ious[:, g].max()
        if top > 0:
            labels[ious[:, g] == top] = 1
    return labels, best_gt


def subsample_labels(
    labels: np.ndarray, batch: int, pos_cap: int, rng: np.random.Generator
) -> np.ndarray:
    """Demote surplus positives/negatives to ignore; keeps ≤ batch entries."""
    out = labels.copy()
    pos = np.where(out == 1)[0]
    if len(pos) > pos_cap:
        drop = rng.choice(pos, size=len(pos) - pos_cap, replace=False)
        out[drop] = -1
        pos = np.where(out == 1)[0]
    neg = np.where(out == 0)[0]
    n_neg = batch - len(pos)
    if len(neg) > n_neg:
        drop = rng.choice(neg, size=len(neg) - n_neg, replace=False)
        out[drop] = -1
    return out


def rpn_targets(
    anchor_set: AnchorSet,
    gt_boxes: np.ndarray,
    pos_iou: float,
    neg_iou: float,
    batch: int,
    pos_cap: int,
    rng: np.random.Generator,
) -> RpnTargets:
    labels, best_gt = assign_rpn_labels(anchor_set.anchors, gt_boxes, pos_iou, neg_iou)
    labels = subsample_labels(labels, batch, pos_cap, rng)
    deltas = np.zeros((len(labels), 4), dtype=np.float64)
    pos = np.where(labels == 1)[0]
    if len(pos):
        deltas[pos] = encode_deltas(anchor_set.anchors[pos], gt_boxes[best_gt[pos]])
    return RpnTargets(labels=labels, deltas=deltas)


def assign_roi_labels(
    candidates: np.ndarray,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    fg_iou: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Class labels (0 = background) and best-GT indices for candidates."""
    n = len(candidates)
    if len(gt_boxes) == 0:
        return np.zeros(n, dtype=np.int64), np.full(n, -1, dtype=np.int64)
    ious = iou_matrix(candidates, gt_boxes)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(n), best_gt]
    labels = np.where(best_iou >= fg_iou, gt_classes[best_gt], 0).astype(np.int64)
    return labels, best_gt


def sample_rois(
    proposals: np.ndarray,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    batch: int,
    fg_frac: float,
    fg_iou: float,
    rng: np.random.Generator,
    include_gt: bool = True,
) -> RoiSample:
    """Sample a fixed-size region batch at the configured fg:bg ratio.

    Ground-truth boxes are appended to the candidate pool during training so
    the region head sees foreground examples from the first step. When one
    side runs short the other fills the batch; sampling falls back to
    replacement if candidates run out entirely.
    """
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_classes = np.asarray(gt_classes, dtype=np.int64).reshape(-1)
    candidates = proposals
    if include_gt and len(gt_boxes):
        # Exact GT boxes plus two mildly jittered copies each, so the
        # region head also trains on imperfectly-aligned foreground crops
        # like the ones proposals deliver at inference time.
        jittered = []
        for _ in range(2):
            w = gt_boxes[:, 2] - gt_boxes[:, 0]
            h = gt_boxes[:, 3] - gt_boxes[:, 1]
            shift = rng.uniform(-0.12, 0.12, size=(len(gt_boxes), 4))
            jittered.append(gt_boxes + shift * np.stack([w, h, w, h], axis=1))
        candidates = np.vstack([proposals, gt_boxes, *jittered])
    if len(candidates) == 0:
        raise ValueError("no candidate boxes to sample regions from")

    labels, best_gt = assign_roi_labels(candidates, gt_boxes, gt_classes, fg_iou)
    fg_idx = np.where(labels > 0)[0]
    bg_idx = np.where(labels == 0)[0]

    n_fg = min(int(round(batch * fg_frac)), len(fg_idx))
    chosen_fg = rng.choice(fg_idx, size=n_fg, replace=False) if n_fg else np.zeros(0, dtype=np.int64)
    n_bg = batch - n_fg
    if len(bg_idx) >= n_bg:
        chosen_bg = rng.choice(bg_idx, size=n_bg, replace=False)
    elif len(bg_idx) > 0:
        chosen_bg = rng.choice(bg_idx, size=n_bg, replace=True)
    else:
        chosen_bg = rng.choice(fg_idx, size=n_bg, replace=True)
    chosen = np.concatenate([chosen_fg, chosen_bg])

    boxes = candidates[chosen]
    out_labels = labels[chosen]
    deltas = np.zeros((batch, 4), dtype=np.float64)
    fg_rows = np.where(out_labels > 0)[0]
    if len(fg_rows):
        matched = gt_boxes[best_gt[chosen[fg_rows]]]
        deltas[fg_rows] = encode_deltas(boxes[fg_rows], matched)
    return RoiSample(boxes=boxes, labels=out_labels, deltas=deltas)
