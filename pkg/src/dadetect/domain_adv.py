"""Per-proposal domain classification with gradient reversal.

The classifier learns to tell translated-source proposal features (domain
label 0) from real-target ones (label 1). A gradient reversal layer sits
between the cropped trunk features and the classifier, so the classifier's
parameters receive the plain minimization gradient while the shared trunk
receives the negated one and learns domain-confused features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .detection.model import DetectorNet
from .detection.pipeline import target_proposals, training_forward
from .translation.losses import PROB_EPS, check_finite


class _GradReverse(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lambda_scale):
        ctx.lambda_scale = lambda_scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.lambda_scale, None


def grad_reverse(x: torch.Tensor, lambda_scale: float = 1.0) -> torch.Tensor:
    """Identity forward; backward multiplies the gradient by -lambda_scale."""
    return _GradReverse.apply(x, lambda_scale)


class DomainClassifier(nn.Module):
    """Small fully convolutional net mapping a region crop to one logit."""

    def __init__(self, channels: int = 128):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Linear(channels, 1)

    def forward(self, crops: torch.Tensor) -> torch.Tensor:
        """(N, C, r, r) region crops -> (N,) domain logits."""
        x = self.conv(crops)
        x = x.mean(dim=(2, 3))
        return self.head(x).squeeze(1)


def domain_loss(classifier: DomainClassifier, crops: torch.Tensor, domain_label: int) -> torch.Tensor:
    """Binary cross-entropy of per-proposal domain predictions.

    The raw objective sums over proposals; we divide by the proposal count
    so the weighting stays batch-size invariant. Probabilities are clamped
    to [1e-7, 1 - 1e-7] before the log.
    """
    if crops.shape[0] == 0:
        raise ValueError("domain_loss needs a nonempty proposal batch")
    p = torch.sigmoid(classifier(crops)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    if domain_label == 1:
        loss = -torch.log(p).mean()
    elif domain_label == 0:
        loss = -torch.log(1.0 - p).mean()
    else:
        raise ValueError(f"domain label must be 0 or 1, got {domain_label}")
    check_finite(domain=loss)
    return loss


def proposal_domain_loss(
    classifier: DomainClassifier,
    source_crops: torch.Tensor,
    target_crops: torch.Tensor,
) -> torch.Tensor:
    """Two-stream domain loss, averaged over all proposals of both streams."""
    n_s, n_t = source_crops.shape[0], target_crops.shape[0]
    p_s = torch.sigmoid(classifier(source_crops)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    p_t = torch.sigmoid(classifier(target_crops)).clamp(PROB_EPS, 1.0 - PROB_EPS)
    loss = (-torch.log(1.0 - p_s).sum() - torch.log(p_t).sum()) / (n_s + n_t)
    check_finite(domain=loss)
    return loss


@dataclass
class FdaStepResult:
    total: torch.Tensor
    det: float
    domain: float
    det_components: dict[str, float]


def fda_step(
    detector: DetectorNet,
    classifier: DomainClassifier,
    optimizer: torch.optim.Optimizer,
    source_image: torch.Tensor,
    source_boxes: np.ndarray,
    source_classes: np.ndarray,
    target_image: torch.Tensor,
    lambda1: float,
    rng: np.random.Generator,
) -> FdaStepResult:
    """One adversarial adaptation step.

    The labeled (possibly translated) source stream contributes the full
    detection loss and domain loss with label 0 on its sampled region
    features; the unlabeled target stream contributes domain loss with
    label 1 on its top proposals. No detection loss touches the target
    stream. With ``lambda1 == 0`` the update equals a plain detection step.
    """
    optimizer.zero_grad(set_to_none=True)
    forward = training_forward(detector, source_image, source_boxes, source_classes, rng)

    if lambda1 != 0.0:
        source_crops = detector.crop_features(forward.features, forward.roi_sample.boxes)
        target_features, target_props = target_proposals(detector, target_image)
        target_crops = detector.crop_features(target_features, target_props.boxes)
        dom = proposal_domain_loss(
            classifier,
            grad_reverse(source_crops),
            grad_reverse(target_crops),
        )
        total = forward.loss.total + lambda1 * dom
        dom_value = float(dom.detach())
    else:
        total = forward.loss.total
        dom_value = 0.0

    total.backward()
    optimizer.step()
    return FdaStepResult(
        total=total,
        det=forward.loss.det,
        domain=dom_value,
        det_components=forward.loss.to_floats(),
    )
