"""The four-term detection objective.

``total = cls_det + [fg]·loc_det + cls_rpn + [fg]·loc_rpn`` where both
classification terms are cross-entropies, both localization terms are
smooth-L1 on normalized box deltas, and the Iverson brackets zero the
localization terms exactly when no foreground target exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..translation.losses import check_finite
from .targets import RoiSample, RpnTargets


def smooth_l1(x: torch.Tensor) -> torch.Tensor:
    """Elementwise: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise."""
    absx = x.abs()
    return torch.where(absx < 1.0, 0.5 * x * x, absx - 0.5)


@dataclass
class DetectionLossBreakdown:
    """Torch scalars for backward plus exact float components for logging."""

    total: torch.Tensor
    cls_det: float
    loc_det: float
    cls_rpn: float
    loc_rpn: float

    @property
    def det(self) -> float:
        return self.cls_det + self.loc_det + self.cls_rpn + self.loc_rpn

    def to_floats(self) -> dict[str, float]:
        return {
            "cls_det": self.cls_det,
            "loc_det": self.loc_det,
            "cls_rpn": self.cls_rpn,
            "loc_rpn": self.loc_rpn,
            "det": self.det,
        }


def detection_loss(
    rpn_objectness: torch.Tensor,
    rpn_deltas: torch.Tensor,
    roi_cls_logits: torch.Tensor,
    roi_reg: torch.Tensor,
    rpn_tgt: RpnTargets,
    roi_sample: RoiSample,
) -> DetectionLossBreakdown:
    """Compose the four-term loss from head outputs and assigned targets.

    Classification terms average over their sampled entries; localization
    terms average the per-entry coordinate-summed smooth-L1 over foreground
    entries and are identically zero when none exist.
    """
    device, dtype = rpn_objectness.device, rpn_objectness.dtype
    zero = torch.zeros((), device=device, dtype=dtype)

    sampled = np.where(rpn_tgt.labels >= 0)[0]
    if len(sampled) == 0:
        cls_rpn = zero
    else:
        idx = torch.as_tensor(sampled, device=device)
        target = torch.as_tensor(
            rpn_tgt.labels[sampled], device=device, dtype=dtype
        )
        cls_rpn = F.binary_cross_entropy_with_logits(
            rpn_objectness[idx], target, reduction="mean"
        )

    positives = np.where(rpn_tgt.labels == 1)[0]
    if len(positives) == 0:
        loc_rpn = zero
    else:
        idx = torch.as_tensor(positives, device=device)
        target = torch.as_tensor(rpn_tgt.deltas[positives], device=device, dtype=dtype)
        loc_rpn = smooth_l1(rpn_deltas[idx] - target).sum(dim=1).mean()

    labels = torch.as_tensor(roi_sample.labels, device=device)
    cls_det = F.cross_entropy(roi_cls_logits, labels, reduction="mean")

    fg_rows = np.where(roi_sample.labels > 0)[0]
    if len(fg_rows) == 0:
        loc_det = zero
    else:
        rows = torch.as_tensor(fg_rows, device=device)
        cls_idx = torch.as_tensor(roi_sample.labels[fg_rows] - 1, device=device)
        pred = roi_reg[rows, cls_idx]
        target = torch.as_tensor(roi_sample.deltas[fg_rows], device=device, dtype=dtype)
        loc_det = smooth_l1(pred - target).sum(dim=1).mean()

    total = cls_det + loc_det + cls_rpn + loc_rpn
    breakdown = DetectionLossBreakdown(
        total=total,
        cls_det=float(cls_det.detach()),
        loc_det=float(loc_det.detach()),
        cls_rpn=float(cls_rpn.detach()),
        loc_rpn=float(loc_rpn.detach()),
    )
    check_finite(**breakdown.to_floats())
    return breakdown
