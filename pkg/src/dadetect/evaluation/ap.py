"""Average-precision scoring of detections against labeled manifests.

Detections are matched to ground truth greedily per class at a fixed IoU
threshold (0.5 by default). AP integrates the precision envelope over
recall using the continuous all-points rule; the 11-point rule is
available for comparison. Only detection ranking matters: any strictly
monotone rescoring leaves AP unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import match_detections

AP_RULES = ("allpoints", "voc07")


@dataclass
class ClassEval:
    """Per-class AP with its PR curve; ``ap`` is None when the class has
    no ground truth (excluded from mAP rather than counted as zero)."""

    ap: float | None
    gt_count: int
    recalls: np.ndarray = field(default_factory=lambda: np.zeros(0))
    precisions: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class EvalReport:
    per_class: dict[str, ClassEval]
    map: float
    iou_threshold: float
    rule: str

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "iou_threshold": self.iou_threshold,
            "rule": self.rule,
            "per_class": {
                name: {
                    "ap": entry.ap,
                    "gt_count": entry.gt_count,
                    "recalls": entry.recalls.tolist(),
                    "precisions": entry.precisions.tolist(),
                }
                for name, entry in self.per_class.items()
            },
        }


def _ap_from_pr(recalls: np.ndarray, precisions: np.ndarray, rule: str) -> float:
    if len(recalls) == 0:
        return 0.0
    if rule == "voc07":
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            mask = recalls >= t
            ap += (precisions[mask].max() if mask.any() else 0.0) / 11.0
        return float(ap)
    # All-points rule: area under the running-max-from-the-right envelope.
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    prev = np.concatenate([[0.0], recalls[:-1]])
    return float(np.sum((recalls - prev) * envelope))


def average_precision(
    det_boxes,
    det_scores,
    gt_boxes_per_image: list[np.ndarray],
    det_image_index=None,
    iou_threshold: float = 0.5,
    rule: str = "allpoints",
) -> tuple[float | None, np.ndarray, np.ndarray]:
    """AP for one class.

    ``gt_boxes_per_image`` lists this class's ground-truth boxes image by
    image; detections carry the index of their image. Returns
    ``(ap, recalls, precisions)`` with PR points in descending score order.
    AP is None when no ground truth exists.
    """
    if rule not in AP_RULES:
        raise ValueError(f"rule must be one of {AP_RULES}")
    total_gt = sum(len(g) for g in gt_boxes_per_image)
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    det_scores = np.asarray(det_scores, dtype=np.float64)
    if det_image_index is None:
        det_image_index = np.zeros(len(det_boxes), dtype=np.int64)
    det_image_index = np.asarray(det_image_index, dtype=np.int64)

    if total_gt == 0:
        return None, np.zeros(0), np.zeros(0)
    if len(det_boxes) == 0:
        return 0.0, np.zeros(0), np.zeros(0)

    tp = np.zeros(len(det_boxes), dtype=bool)
    for image in np.unique(det_image_index):
        sel = np.where(det_image_index == image)[0]
        gts = gt_boxes_per_image[image]
        result = match_detections(
            det_boxes[sel],
            det_scores[sel],
            np.ones(len(sel), dtype=np.int64),
            gts,
            np.ones(len(gts), dtype=np.int64),
            iou_threshold,
        )
        tp[sel] = result.true_positive

    order = np.argsort(-det_scores, kind="stable")
    tp_sorted = tp[order]
    cum_tp = np.cumsum(tp_sorted)
    cum_fp = np.cumsum(~tp_sorted)
    recalls = cum_tp / total_gt
    precisions = cum_tp / (cum_tp + cum_fp)
    return _ap_from_pr(recalls, precisions, rule), recalls, precisions


def load_detections(path: Path) -> list[dict]:
    """Read a JSON-lines detections file: one object per image."""
    entries = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad JSON: {exc}") from exc
    return entries


def evaluate(
    detections,
    manifest,
    iou_threshold: float = 0.5,
    rule: str = "allpoints",
) -> EvalReport:
    """Score a detections file (or loaded list) against a labeled manifest.

    Every detection's ``image_id`` must exist in the manifest and every
    ``class_id`` in its vocabulary; violations fail fast naming the record.
    mAP is the unweighted mean of per-class AP over classes with at least
    one ground-truth box.
    """
    if isinstance(detections, (str, Path)):
        detections = load_detections(Path(detections))

    num_classes = manifest.num_classes
    id_to_index = {r.image_id: i for i, r in enumerate(manifest.records)}

    # Boxes are read straight from manifest entries; evaluation is the one
    # consumer allowed to see val labels.
    gt_by_class: list[list[np.ndarray]] = [
        [np.zeros((0, 4)) for _ in manifest.records] for _ in range(num_classes)
    ]
    for img_idx, ref in enumerate(manifest.records):
        if not ref.has_labels:
            raise ValueError(
                f"manifest record {ref.image_id!r} is unlabeled; evaluation "
                "needs a labeled split"
            )
        for cls in range(1, num_classes + 1):
            boxes = [
                [b["x1"], b["y1"], b["x2"], b["y2"]]
                for b in ref.boxes
                if b["class_id"] == cls
            ]
            gt_by_class[cls - 1][img_idx] = np.array(boxes, dtype=np.float64).reshape(
                -1, 4
            )

    det_boxes: list[list] = [[] for _ in range(num_classes)]
    det_scores: list[list] = [[] for _ in range(num_classes)]
    det_images: list[list] = [[] for _ in range(num_classes)]
    for entry in detections:
        image_id = entry.get("image_id")
        if image_id not in id_to_index:
            raise ValueError(f"detections reference unknown image_id {image_id!r}")
        img_idx = id_to_index[image_id]
        for det in entry.get("detections", []):
            cls = int(det["class_id"])
            if not 1 <= cls <= num_classes:
                raise ValueError(
                    f"image {image_id!r}: unknown class_id {cls} "
                    f"(vocabulary has {num_classes} classes)"
                )
            det_boxes[cls - 1].append([det["x1"], det["y1"], det["x2"], det["y2"]])
            det_scores[cls - 1].append(float(det["score"]))
            det_images[cls - 1].append(img_idx)

    per_class: dict[str, ClassEval] = {}
    aps = []
    for cls in range(1, num_classes + 1):
        name = manifest.class_names[cls - 1]
        ap, recalls, precisions = average_precision(
            np.array(det_boxes[cls - 1], dtype=np.float64).reshape(-1, 4),
            np.array(det_scores[cls - 1], dtype=np.float64),
            gt_by_class[cls - 1],
            np.array(det_images[cls - 1], dtype=np.int64),
            iou_threshold,
            rule,
        )
        gt_count = sum(len(g) for g in gt_by_class[cls - 1])
        per_class[name] = ClassEval(ap=ap, gt_count=gt_count, recalls=recalls, precisions=precisions)
        if ap is not None:
            aps.append(ap)

    mean_ap = float(np.mean(aps)) if aps else 0.0
    return EvalReport(per_class=per_class, map=mean_ap, iou_threshold=iou_threshold, rule=rule)
