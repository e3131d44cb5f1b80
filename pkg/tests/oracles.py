"""Independent brute-force references used to validate the fast paths.

Everything here is written with explicit loops and its own arithmetic so
it shares no code with the implementations under test.
"""

from __future__ import annotations

import numpy as np


def iou_scalar(a, b) -> float:
    """Plain min/max IoU of two corner boxes."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def iou_lattice(a, b) -> float:
    """Exact IoU for integer-coordinate boxes by counting unit cells."""
    cells_a = {
        (x, y)
        for x in range(int(a[0]), int(a[2]))
        for y in range(int(a[1]), int(a[3]))
    }
    cells_b = {
        (x, y)
        for x in range(int(b[0]), int(b[2]))
        for y in range(int(b[1]), int(b[3]))
    }
    inter = len(cells_a & cells_b)
    union = len(cells_a | cells_b)
    return inter / union


def nms_bruteforce(boxes, scores, threshold) -> list[int]:
    """Greedy NMS by explicit scan; ties by lower original index."""
    n = len(boxes)
    alive = [True] * n
    kept = []
    while True:
        best, best_score = -1, -np.inf
        for i in range(n):
            if alive[i] and scores[i] > best_score:
                best, best_score = i, scores[i]
        if best < 0:
            break
        kept.append(best)
        alive[best] = False
        for i in range(n):
            if alive[i] and iou_scalar(boxes[best], boxes[i]) > threshold:
                alive[i] = False
    return kept


def match_bruteforce(det_boxes, det_scores, det_classes, gt_boxes, gt_classes, thr):
    """Greedy score-ordered matching; best unmatched same-class GT wins."""
    n = len(det_boxes)
    order = sorted(range(n), key=lambda i: (-det_scores[i], i))
    taken = [False] * len(gt_boxes)
    tp = [False] * n
    matched = [-1] * n
    for i in order:
        best, best_iou = -1, -1.0
        for g in range(len(gt_boxes)):
            if taken[g] or gt_classes[g] != det_classes[i]:
                continue
            overlap = iou_scalar(det_boxes[i], gt_boxes[g])
            if overlap > best_iou:
                best, best_iou = g, overlap
        if best >= 0 and best_iou >= thr:
            tp[i] = True
            matched[i] = best
            taken[best] = True
    return np.array(tp), np.array(matched)


def rpn_labels_bruteforce(anchors, gts, pos_iou, neg_iou):
    """Anchor labeling by explicit loops: 1 pos, 0 neg, -1 ignore."""
    n, g = len(anchors), len(gts)
    if g == 0:
        return np.zeros(n, dtype=np.int64)
    labels = np.full(n, -1, dtype=np.int64)
    best = np.zeros(n)
    for i in range(n):
        for j in range(g):
            best[i] = max(best[i], iou_scalar(anchors[i], gts[j]))
        if best[i] < neg_iou:
            labels[i] = 0
        if best[i] >= pos_iou:
            labels[i] = 1
    for j in range(g):
        col = [iou_scalar(anchors[i], gts[j]) for i in range(n)]
        top = max(col)
        if top > 0:
            for i in range(n):
                if col[i] == top:
                    labels[i] = 1
    return labels


def roi_labels_bruteforce(candidates, gts, gt_classes, fg_iou):
    n = len(candidates)
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        best, best_iou = -1, -1.0
        for j in range(len(gts)):
            overlap = iou_scalar(candidates[i], gts[j])
            if overlap > best_iou:
                best, best_iou = j, overlap
        if best >= 0 and best_iou >= fg_iou:
            labels[i] = gt_classes[best]
    return labels


def ap_bruteforce(scores, tp_flags, total_gt) -> float:
    """All-points AP by explicit envelope scan over ranked detections."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    recalls, precisions = [], []
    tp = 0
    for rank, i in enumerate(order, start=1):
        tp += bool(tp_flags[i])
        recalls.append(tp / total_gt)
        precisions.append(tp / rank)
    ap = 0.0
    prev_r = 0.0
    for k in range(len(order)):
        envelope = max(precisions[k:])
        ap += (recalls[k] - prev_r) * envelope
        prev_r = recalls[k]
    return ap


def central_difference(fn, param, index, eps):
    """Central finite difference of a scalar torch function wrt one entry."""
    with_no_grad = param.detach()
    original = with_no_grad.flatten()[index].item()
    with_no_grad.flatten()[index] = original + eps
    plus = float(fn())
    with_no_grad.flatten()[index] = original - eps
    minus = float(fn())
    with_no_grad.flatten()[index] = original
    return (plus - minus) / (2 * eps)


def random_boxes(rng, n, extent=100.0, min_size=2.0, max_size=40.0, integer=False):
    """Valid random corner boxes inside [0, extent]^2."""
    ws = rng.uniform(min_size, max_size, n)
    hs = rng.uniform(min_size, max_size, n)
    x1 = rng.uniform(0, extent - ws)
    y1 = rng.uniform(0, extent - hs)
    boxes = np.stack([x1, y1, x1 + ws, y1 + hs], axis=1)
    if integer:
        boxes = np.floor(boxes)
        boxes[:, 2] = np.maximum(boxes[:, 2], boxes[:, 0] + 1)
        boxes[:, 3] = np.maximum(boxes[:, 3], boxes[:, 1] + 1)
    return boxes
