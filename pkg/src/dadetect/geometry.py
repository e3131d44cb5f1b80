"""Box geometry primitives shared by every stage of the pipeline.

All functions operate on numpy arrays of corner-format boxes
``(x1, y1, x2, y2)`` with continuous coordinates, ``(x1, y1)`` the top-left
corner and width ``x2 - x1`` (no +1 pixel correction). Degenerate boxes
(zero or negative extent) are invalid inputs everywhere. Everything here is
a pure function over immutable inputs and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Largest |log size ratio| a decoded box may request before it is treated as
# a divergent regression output: exp(4.135...) = 62.5 = 1000/16.
LOG_SIZE_CAP = float(np.log(1000.0 / 16.0))


class DecodeOverflowError(ValueError):
    """A regressed box delta requested a size beyond the configured cap."""


def as_boxes(boxes) -> np.ndarray:
    """Coerce to a float64 ``(N, 4)`` array, accepting a single box too."""
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected boxes of shape (N, 4), got {arr.shape}")
    return arr


def validate_boxes(boxes: np.ndarray) -> None:
    """Raise ValueError unless every box is finite with positive extent."""
    arr = as_boxes(boxes)
    if not np.all(np.isfinite(arr)):
        raise ValueError("box coordinates must be finite")
    if np.any(arr[:, 2] <= arr[:, 0]) or np.any(arr[:, 3] <= arr[:, 1]):
        raise ValueError("boxes must have strictly positive width and height")


def box_areas(boxes: np.ndarray) -> np.ndarray:
    arr = as_boxes(boxes)
    return (arr[:, 2] - arr[:, 0]) * (arr[:, 3] - arr[:, 1])


def iou(a, b) -> float:
    """Intersection-over-union of two boxes; symmetric, in [0, 1]."""
    return float(iou_matrix(as_boxes(a), as_boxes(b))[0, 0])


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two box sets, shape ``(len(a), len(b))``."""
    a = as_boxes(a)
    b = as_boxes(b)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    union = box_areas(a)[:, None] + box_areas(b)[None, :] - inter
    return inter / union


def _centers_sizes(boxes: np.ndarray):
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    cx = boxes[:, 0] + 0.5 * w
    cy = boxes[:, 1] + 0.5 * h
    return cx, cy, w, h


def encode_deltas(anchors: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Encode target boxes as ``(tx, ty, tw, th)`` relative to anchors.

    ``tx, ty`` are center offsets normalized by anchor width/height and
    ``tw, th`` are log size ratios, so an anchor equal to its target encodes
    to all zeros.
    """
    anchors = as_boxes(anchors)
    targets = as_boxes(targets)
    acx, acy, aw, ah = _centers_sizes(anchors)
    tcx, tcy, tw, th = _centers_sizes(targets)
    return np.stack(
        [(tcx - acx) / aw, (tcy - acy) / ah, np.log(tw / aw), np.log(th / ah)],
        axis=1,
    )


def decode_deltas(
    anchors: np.ndarray,
    deltas: np.ndarray,
    max_log_size: float = LOG_SIZE_CAP,
    clamp: bool = False,
) -> np.ndarray:
    """Invert :func:`encode_deltas`, mapping deltas back to corner boxes.

    Size components beyond ``max_log_size`` signal a divergent regression:
    with ``clamp=False`` (the default) they raise
    :class:`DecodeOverflowError`, while ``clamp=True`` clips them to the cap
    so training-time proposal decoding survives early noisy predictions.
    """
    anchors = as_boxes(anchors)
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim == 1:
        deltas = deltas[None, :]
    if not np.all(np.isfinite(deltas)):
        raise ValueError("deltas must be finite")
    size = deltas[:, 2:4]
    if clamp:
        size = np.clip(size, -max_log_size, max_log_size)
    elif np.any(np.abs(size) > max_log_size):
        raise DecodeOverflowError(
            f"|log size delta| exceeds cap {max_log_size:.4f}: "
            f"max seen {np.abs(size).max():.4f}"
        )
    acx, acy, aw, ah = _centers_sizes(anchors)
    cx = acx + deltas[:, 0] * aw
    cy = acy + deltas[:, 1] * ah
    w = aw * np.exp(size[:, 0])
    h = ah * np.exp(size[:, 1])
    return np.stack(
        [cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1
    )


@dataclass(frozen=True)
class AnchorSet:
    """Anchor grid for one feature map.

    ``anchors`` is ordered row-major over feature cells, then scales, then
    aspects, so index ``((row * feature_w + col) * len(scales) + s) *
    len(aspects) + a`` addresses one anchor. That ordering is relied on by
    the proposal head, which emits per-cell predictions in the same order.
    """

    anchors: np.ndarray
    stride: int
    scales: tuple[float, ...]
    aspects: tuple[float, ...]
    feature_h: int
    feature_w: int

    def __len__(self) -> int:
        return self.anchors.shape[0]

    @property
    def per_cell(self) -> int:
        return len(self.scales) * len(self.aspects)


def generate_anchors(
    feature_h: int,
    feature_w: int,
    stride: int,
    scales,
    aspects,
) -> AnchorSet:
    """Tile anchors over an ``feature_h x feature_w`` grid.

    Anchors are centered at ``((col + 0.5) * stride, (row + 0.5) * stride)``
    and sized area-preservingly: ``w = scale / sqrt(aspect)``,
    ``h = scale * sqrt(aspect)`` with ``aspect = h / w``.
    """
    if feature_h <= 0 or feature_w <= 0 or stride <= 0:
        raise ValueError("feature dims and stride must be positive")
    scales = tuple(float(s) for s in scales)
    aspects = tuple(float(a) for a in aspects)
    if not scales or not aspects:
        raise ValueError("scales and aspects must be nonempty")

    ws = np.array([s / np.sqrt(a) for s in scales for a in aspects])
    hs = np.array([s * np.sqrt(a) for s in scales for a in aspects])

    rows, cols = np.meshgrid(
        np.arange(feature_h), np.arange(feature_w), indexing="ij"
    )
    cx = (cols.reshape(-1) + 0.5) * stride
    cy = (rows.reshape(-1) + 0.5) * stride

    x1 = cx[:, None] - 0.5 * ws[None, :]
    y1 = cy[:, None] - 0.5 * hs[None, :]
    x2 = cx[:, None] + 0.5 * ws[None, :]
    y2 = cy[:, None] + 0.5 * hs[None, :]
    anchors = np.stack([x1, y1, x2, y2], axis=2).reshape(-1, 4)
    return AnchorSet(anchors, int(stride), scales, aspects, feature_h, feature_w)


def clip_boxes(boxes: np.ndarray, height: float, width: float) -> np.ndarray:
    """Clip boxes to ``[0, width] x [0, height]``."""
    arr = as_boxes(boxes).copy()
    arr[:, 0::2] = np.clip(arr[:, 0::2], 0.0, width)
    arr[:, 1::2] = np.clip(arr[:, 1::2], 0.0, height)
    return arr


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    """Greedy non-maximum suppression; returns kept indices.

    Highest score wins each round and suppresses boxes with IoU strictly
    above the threshold. Equal scores break toward the lower original index,
    which keeps the result deterministic.
    """
    boxes = as_boxes(boxes)
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    order = np.argsort(-scores, kind="stable")
    ious = iou_matrix(boxes, boxes)
    keep: list[int] = []
    alive = np.ones(len(boxes), dtype=bool)
    for idx in order:
        if not alive[idx]:
            continue
        keep.append(int(idx))
        alive &= ious[idx] <= iou_threshold
        alive[idx] = False
    return keep


@dataclass
class MatchResult:
    """Greedy detection/ground-truth assignment for one image.

    ``true_positive[i]`` tells whether detection ``i`` (in the original
    input order) matched a ground-truth box; ``matched_gt[i]`` is that box's
    index or -1. Each ground-truth box is consumed by at most one detection.
    """

    true_positive: np.ndarray
    matched_gt: np.ndarray
    gt_counts: dict[int, int] = field(default_factory=dict)


def match_detections(
    det_boxes: np.ndarray,
    det_scores: np.ndarray,
    det_classes: np.ndarray,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Assign detections to ground truth greedily in descending score order.

    A detection is a true positive iff its best-IoU *unmatched* same-class
    ground-truth box overlaps at least ``iou_threshold``; that box is then
    consumed. Ties in score fall back to the lower original index.
    """
    det_boxes = as_boxes(det_boxes) if len(det_boxes) else np.zeros((0, 4))
    gt_boxes = as_boxes(gt_boxes) if len(gt_boxes) else np.zeros((0, 4))
    det_scores = np.asarray(det_scores, dtype=np.float64)
    det_classes = np.asarray(det_classes, dtype=np.int64)
    gt_classes = np.asarray(gt_classes, dtype=np.int64)

    n_det = det_boxes.shape[0]
    tp = np.zeros(n_det, dtype=bool)
    matched = np.full(n_det, -1, dtype=np.int64)
    gt_taken = np.zeros(gt_boxes.shape[0], dtype=bool)

    order = np.argsort(-det_scores, kind="stable")
    ious = iou_matrix(det_boxes, gt_boxes) if n_det and len(gt_boxes) else None
    for idx in order:
        cls = det_classes[idx]
        cand = np.where((gt_classes == cls) & ~gt_taken)[0]
        if len(cand) == 0 or ious is None:
            continue
        best = cand[np.argmax(ious[idx, cand])]
        if ious[idx, best] >= iou_threshold:
            tp[idx] = True
            matched[idx] = best
            gt_taken[best] = True

    counts: dict[int, int] = {}
    for cls in gt_classes:
        counts[int(cls)] = counts.get(int(cls), 0) + 1
    return MatchResult(true_positive=tp, matched_gt=matched, gt_counts=counts)
