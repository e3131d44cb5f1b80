"""Two-stage detector: small conv trunk, proposal head, region head.

The trunk downsamples by 16 overall (so a 128x128 image yields an 8x8
feature map) and exposes 128-channel features shared by the proposal head,
the region head, and the domain classifier. Region features are extracted
by differentiable bilinear crop-and-resize.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..geometry import AnchorSet, generate_anchors


@dataclass(frozen=True)
class DetectorConfig:
    num_classes: int = 3
    stride: int = 16
    feature_channels: int = 128
    anchor_scales: tuple[float, ...] = (16.0, 24.0, 32.0, 48.0, 64.0)
    anchor_aspects: tuple[float, ...] = (0.5, 1.0, 2.0)
    roi_size: int = 6
    proposals_per_image: int = 64
    test_proposals: int = 128
    pre_nms_top: int = 256
    test_pre_nms_top: int = 512
    proposal_nms: float = 0.7
    proposal_min_size: float = 2.0
    rpn_pos_iou: float = 0.7
    rpn_neg_iou: float = 0.3
    rpn_batch: int = 256
    rpn_pos_cap: int = 128
    roi_batch: int = 64
    roi_fg_iou: float = 0.5
    roi_fg_frac: float = 0.25
    score_thresh: float = 0.05
    det_nms: float = 0.3
    max_dets: int = 20
    short_side: int = 128

    @property
    def anchors_per_cell(self) -> int:
        return len(self.anchor_scales) * len(self.anchor_aspects)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        data = dict(data)
        for key in ("anchor_scales", "anchor_aspects"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def with_overrides(self, **kwargs) -> "DetectorConfig":
        return replace(self, **kwargs)


def anchors_for_image(cfg: DetectorConfig, height: int, width: int) -> AnchorSet:
    feature_h = -(-height // cfg.stride)
    feature_w = -(-width // cfg.stride)
    return generate_anchors(
        feature_h, feature_w, cfg.stride, cfg.anchor_scales, cfg.anchor_aspects
    )


class Backbone(nn.Module):
    """Five conv blocks, four of them strided: overall stride 16.

    Group normalization keeps the from-scratch trunk trainable with plain
    SGD and behaves identically in train and eval mode, which matters for
    deterministic evaluation.
    """

    def __init__(self, out_channels: int = 128):
        super().__init__()
        widths = (32, 64, 96, out_channels)
        layers: list[nn.Module] = []
        in_ch = 3
        for w in widths:
            layers += [
                nn.Conv2d(in_ch, w, 3, stride=2, padding=1),
                nn.GroupNorm(8, w),
                nn.ReLU(inplace=True),
            ]
            in_ch = w
        layers += [
            nn.Conv2d(in_ch, out_channels, 3, stride=1, padding=1),
            nn.GroupNorm(8, out_channels),
            nn.ReLU(inplace=True),
        ]
        self.net = nn.Sequential(*layers)
        for m in self.net:
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
                nn.init.zeros_(m.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class RPNHead(nn.Module):
    """Shared 3x3 conv then 1x1 objectness and box-delta heads per anchor."""

    def __init__(self, channels: int, anchors_per_cell: int):
        super().__init__()
        self.anchors_per_cell = anchors_per_cell
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        self.objectness = nn.Conv2d(channels, anchors_per_cell, 1)
        self.deltas = nn.Conv2d(channels, anchors_per_cell * 4, 1)
        for m in (self.conv, self.objectness, self.deltas):
            nn.init.normal_(m.weight, 0.0, 0.01)
            nn.init.zeros_(m.bias)
        # Start objectness at a low prior so the sparse positive anchors,
        # not the flood of easy negatives, drive early training.
        nn.init.constant_(self.objectness.bias, -4.0)

    def forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (objectness (N,), deltas (N,4)) flattened to match the
        anchor ordering: cells row-major, then scale, then aspect."""
        x = F.relu(self.conv(features))
        obj = self.objectness(x)
        dlt = self.deltas(x)
        batch, a, h, w = obj.shape
        obj = obj.permute(0, 2, 3, 1).reshape(batch, h * w * a)
        dlt = dlt.reshape(batch, a, 4, h, w).permute(0, 3, 4, 1, 2).reshape(batch, h * w * a, 4)
        return obj[0], dlt[0]


class RoIHead(nn.Module):
    """Per-region classifier over m+1 classes and per-class box regressor."""

    def __init__(self, channels: int, roi_size: int, num_classes: int):
        super().__init__()
        self.num_classes = num_classes
        self.fc = nn.Linear(channels * roi_size * roi_size, 256)
        self.cls = nn.Linear(256, num_classes + 1)
        self.reg = nn.Linear(256, num_classes * 4)
        nn.init.kaiming_normal_(self.fc.weight, nonlinearity="relu")
        nn.init.zeros_(self.fc.bias)
        nn.init.normal_(self.cls.weight, 0.0, 0.01)
        nn.init.zeros_(self.cls.bias)
        nn.init.normal_(self.reg.weight, 0.0, 0.001)
        nn.init.zeros_(self.reg.bias)

    def forward(self, crops: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = F.relu(self.fc(crops.flatten(1)))
        return self.cls(x), self.reg(x).reshape(-1, self.num_classes, 4)


def crop_and_resize(
    features: torch.Tensor, boxes: np.ndarray, stride: int, out_size: int
) -> torch.Tensor:
    """Bilinearly sample an ``out_size^2`` grid of each box from the trunk.

    Boxes are pixel-space corners; sample points sit at crop-cell centers.
    Differentiable w.r.t. ``features`` (box coordinates are treated as
    constants, matching the two-stage training convention).
    """
    if features.dim() != 4 or features.shape[0] != 1:
        raise ValueError("expected features of shape (1, C, h, w)")
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    n = boxes.shape[0]
    _, _, fh, fw = features.shape
    device, dtype = features.device, features.dtype

    t = torch.as_tensor(boxes, dtype=dtype, device=device)
    cells = (torch.arange(out_size, dtype=dtype, device=device) + 0.5) / out_size
    xs = t[:, 0:1] + cells[None, :] * (t[:, 2:3] - t[:, 0:1])  # (n, r)
    ys = t[:, 1:2] + cells[None, :] * (t[:, 3:4] - t[:, 1:2])
    gx = 2.0 * (xs / stride) / fw - 1.0
    gy = 2.0 * (ys / stride) / fh - 1.0
    grid = torch.stack(
        [gx[:, None, :].expand(n, out_size, out_size),
         gy[:, :, None].expand(n, out_size, out_size)],
        dim=3,
    )
    expanded = features.expand(n, -1, -1, -1)
    return F.grid_sample(
        expanded, grid, mode="bilinear", padding_mode="border", align_corners=False
    )


class DetectorNet(nn.Module):
    """Backbone + proposal head + region head under one config."""

    def __init__(self, cfg: DetectorConfig = DetectorConfig()):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg.feature_channels)
        self.rpn = RPNHead(cfg.feature_channels, cfg.anchors_per_cell)
        self.roi_head = RoIHead(cfg.feature_channels, cfg.roi_size, cfg.num_classes)

    def extract_features(self, image: torch.Tensor) -> torch.Tensor:
        """Trunk features for a (1,3,H,W) image in [0,1]."""
        if image.dim() != 4:
            raise ValueError("expected a batched (1,3,H,W) image tensor")
        return self.backbone(image)

    def rpn_forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.rpn(features)

    def roi_forward(self, features: torch.Tensor, boxes: np.ndarray):
        crops = crop_and_resize(features, boxes, self.cfg.stride, self.cfg.roi_size)
        return self.roi_head(crops)

    def crop_features(self, features: torch.Tensor, boxes: np.ndarray) -> torch.Tensor:
        return crop_and_resize(features, boxes, self.cfg.stride, self.cfg.roi_size)
