from .losses import DetectionLossBreakdown, detection_loss, smooth_l1
from .model import (
    Backbone,
    DetectorConfig,
    DetectorNet,
    RoIHead,
    RPNHead,
    anchors_for_image,
    crop_and_resize,
)
from .pipeline import (
    Detection,
    TrainForward,
    detect,
    detections_entry,
    target_proposals,
    training_forward,
    write_detections,
)
from .proposals import ProposalSet, propose
from .targets import (
    RoiSample,
    RpnTargets,
    assign_roi_labels,
    assign_rpn_labels,
    rpn_targets,
    sample_rois,
    subsample_labels,
)

__all__ = [
    "Backbone",
    "Detection",
    "DetectionLossBreakdown",
    "DetectorConfig",
    "DetectorNet",
    "ProposalSet",
    "RPNHead",
    "RoIHead",
    "RoiSample",
    "RpnTargets",
    "TrainForward",
    "anchors_for_image",
    "assign_roi_labels",
    "assign_rpn_labels",
    "crop_and_resize",
    "detect",
    "detection_loss",
    "detections_entry",
    "propose",
    "rpn_targets",
    "sample_rois",
    "smooth_l1",
    "subsample_labels",
    "target_proposals",
    "training_forward",
    "write_detections",
]
