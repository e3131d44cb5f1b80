"""Proposal generation from raw proposal-head outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import AnchorSet, clip_boxes, decode_deltas, nms


@dataclass
class ProposalSet:
    """Post-NMS scored candidate boxes, sorted by descending objectness."""

    boxes: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return self.boxes.shape[0]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def propose(
    objectness_logits: np.ndarray,
    deltas: np.ndarray,
    anchor_set: AnchorSet,
    image_hw: tuple[int, int],
    pre_nms_top: int = 256,
    nms_threshold: float = 0.7,
    min_size: float = 2.0,
    top_k: int = 64,
) -> ProposalSet:
    """Decode, clip, filter and NMS anchor predictions into proposals.

    If every decoded box degenerates (possible under a divergent regressor)
    the fallback keeps the ``top_k`` highest-scoring raw anchors instead,
    so callers always receive a nonempty set.
    """
    objectness_logits = np.asarray(objectness_logits, dtype=np.float64).reshape(-1)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    if len(objectness_logits) != len(anchor_set):
        raise ValueError(
            f"got {len(objectness_logits)} scores for {len(anchor_set)} anchors"
        )
    height, width = image_hw
    scores = _sigmoid(objectness_logits)

    order = np.argsort(-scores, kind="stable")[:pre_nms_top]
    boxes = decode_deltas(anchor_set.anchors[order], deltas[order], clamp=True)
    boxes = clip_boxes(boxes, height, width)
    wide = (boxes[:, 2] - boxes[:, 0]) >= min_size
    tall = (boxes[:, 3] - boxes[:, 1]) >= min_size
    valid = wide & tall
    boxes, kept_scores = boxes[valid], scores[order][valid]

    if len(boxes) == 0:
        # Fallback: raw anchors by score.
        fallback = np.argsort(-scores, kind="stable")[:top_k]
        boxes = clip_boxes(anchor_set.anchors[fallback], height, width)
        ok = ((boxes[:, 2] - boxes[:, 0]) >= min_size) & (
            (boxes[:, 3] - boxes[:, 1]) >= min_size
        )
        return ProposalSet(boxes=boxes[ok], scores=scores[fallback][ok])

    keep = nms(boxes, kept_scores, nms_threshold)[:top_k]
    return ProposalSet(boxes=boxes[keep], scores=kept_scores[keep])
