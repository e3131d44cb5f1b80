from .ablation import ensure_dataset, run_ablation, run_nogap_control, run_regime, run_seed_lane
from .checkpoint import SCHEMA, CheckpointError, load_checkpoint, save_checkpoint
from .config import REGIMES, TrainConfig, lr_schedule_detection
from .loops import (
    Split,
    build_detector,
    build_translation_model,
    det_step,
    evaluate_detector,
    full_loss,
    load_detector,
    load_split,
    load_translation_model,
    run_joint,
    run_pretrain,
    train_detector,
    train_translation,
    translate_manifest,
)
from .probe import run_probe
from .records import LOSS_KEYS, RunRecordWriter, read_events

__all__ = [
    "LOSS_KEYS",
    "REGIMES",
    "SCHEMA",
    "CheckpointError",
    "RunRecordWriter",
    "Split",
    "TrainConfig",
    "build_detector",
    "build_translation_model",
    "det_step",
    "ensure_dataset",
    "evaluate_detector",
    "full_loss",
    "load_checkpoint",
    "load_detector",
    "load_split",
    "load_translation_model",
    "lr_schedule_detection",
    "read_events",
    "run_ablation",
    "run_joint",
    "run_nogap_control",
    "run_pretrain",
    "run_probe",
    "run_regime",
    "run_seed_lane",
    "save_checkpoint",
    "train_detector",
    "train_translation",
    "translate_manifest",
]
