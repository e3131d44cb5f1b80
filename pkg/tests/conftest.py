import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dadetect.data.styles import CLEAN, FOG
from dadetect.data.synth import generate_domain_pair
from dadetect.detection.model import DetectorConfig
from dadetect.training.config import TrainConfig


def tiny_detector_config(**overrides) -> DetectorConfig:
    """Small anchor grid and proposal counts so unit tests stay fast."""
    base = dict(
        num_classes=3,
        anchor_scales=(16.0, 32.0, 64.0),
        anchor_aspects=(0.5, 1.0, 2.0),
        proposals_per_image=16,
        pre_nms_top=64,
        roi_batch=16,
        rpn_batch=64,
        rpn_pos_cap=32,
        short_side=64,
    )
    base.update(overrides)
    return DetectorConfig(**base)


def tiny_train_config(data_dir: Path, out_dir: Path, **overrides) -> TrainConfig:
    base = dict(
        data_dir=str(data_dir),
        out_dir=str(out_dir),
        seed=0,
        pda_epochs=2,
        pda_decay_start=1,
        det_epochs=2,
        det_lr_drop_epoch=1,
        joint_epochs=1,
        gen_base=8,
        gen_depth=3,
        disc_base=8,
        detector=tiny_detector_config(),
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> Path:
    """A 6-train/3-val clean->fog pair of 64x64 images, shared per session."""
    out = tmp_path_factory.mktemp("tinydata")
    generate_domain_pair(
        seed=7,
        source_style=CLEAN,
        target_style=FOG,
        n_train=6,
        n_val=3,
        out_dir=out,
        size=(64, 64),
        object_count=(1, 2),
    )
    return out


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
