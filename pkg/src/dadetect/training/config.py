"""Run configuration: one dataclass covering all three training stages."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..detection.model import DetectorConfig

REGIMES = ("baseline", "pda", "fda", "pda+fda")


@dataclass
class TrainConfig:
    """Everything a run needs; JSON-serializable, CLI-overridable.

    The stage schedules default to: translation at 2e-4 for 30 epochs then
    linear decay to zero at 60; detection at 1e-3 for 6 epochs then 1e-4
    for 3 more; the joint stage at all base rates scaled by 0.1 for 10
    epochs with both adaptation weights at 0.5.
    """

    regime: str = "baseline"
    data_dir: str = ""
    out_dir: str = ""
    seed: int = 0
    deterministic: bool = True

    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda_cyc: float = 10.0

    pda_epochs: int = 60
    pda_decay_start: int = 30
    pda_lr: float = 2e-4
    pda_batch: int = 1
    gan_mode: str = "crossentropy"
    gen_base: int = 16
    gen_depth: int = 4
    disc_base: int = 32

    det_epochs: int = 9
    det_lr: float = 1e-3
    det_lr_drop_epoch: int = 6
    det_lr_after: float = 1e-4
    momentum: float = 0.9
    weight_decay: float = 5e-4

    joint_epochs: int = 10
    joint_lr_scale: float = 0.1

    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda_cyc < 0:
            raise ValueError("loss weights must be nonnegative")
        if isinstance(self.detector, dict):
            self.detector = DetectorConfig.from_dict(self.detector)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["detector"] = self.detector.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "detector" in data:
            data["detector"] = DetectorConfig.from_dict(data["detector"])
        return cls(**data)

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path: Path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, assignments: list[str]) -> "TrainConfig":
        """Apply ``key=value`` strings, with ``detector.key`` reaching the
        nested detector config. Values parse as JSON, falling back to str."""
        data = self.to_dict()
        for item in assignments:
            if "=" not in item:
                raise ValueError(f"override {item!r} is not of the form key=value")
            key, raw = item.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            if key.startswith("detector."):
                sub = key.split(".", 1)[1]
                if sub not in data["detector"]:
                    raise KeyError(f"unknown detector config key {sub!r}")
                data["detector"][sub] = value
            else:
                if key not in data:
                    raise KeyError(f"unknown config key {key!r}")
                data[key] = value
        return TrainConfig.from_dict(data)

    def replace(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


def lr_schedule_detection(
    epoch: int, base: float = 1e-3, drop_epoch: int = 6, after: float = 1e-4, total: int = 9
) -> float:
    """Step schedule: ``base`` before ``drop_epoch``, ``after`` afterwards."""
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside [0, {total})")
    return base if epoch < drop_epoch else after
