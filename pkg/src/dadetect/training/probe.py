"""Linear-probe check of feature alignment.

A fresh domain classifier is trained on frozen trunk features of each
pipeline's own input streams (raw source vs target for the baseline;
translated source vs target for the adapted model). Lower held-out
accuracy means the trunk mixes the domains better.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..data.manifest import load_manifest
from ..detection.pipeline import target_proposals
from ..domain_adv import DomainClassifier
from ..torchutil import from_pm1, image_to_tensor, seed_everything, to_pm1
from .checkpoint import load_checkpoint
from .config import TrainConfig
from .loops import build_detector, build_translation_model


def _collect_crops(detector, images: list[np.ndarray], translator=None) -> list[torch.Tensor]:
    """Per-image proposal feature crops from a frozen trunk."""
    crops = []
    detector.eval()
    with torch.no_grad():
        for image in images:
            tensor = image_to_tensor(image)
            if translator is not None:
                tensor = from_pm1(translator(to_pm1(tensor)))
            features, props = target_proposals(detector, tensor)
            crops.append(detector.crop_features(features, props.boxes))
    return crops


def _probe_accuracy(
    source_crops: list[torch.Tensor],
    target_crops: list[torch.Tensor],
    channels: int,
    seed: int,
    train_frac: float = 0.7,
    epochs: int = 10,
    batch: int = 256,
    lr: float = 1e-3,
) -> float:
    """Train a fresh classifier on frozen crops; held-out accuracy."""
    n_train_s = int(round(train_frac * len(source_crops)))
    n_train_t = int(round(train_frac * len(target_crops)))

    def flatten(crop_list):
        return torch.cat(crop_list) if crop_list else torch.zeros(0)

    train_x = torch.cat([flatten(source_crops[:n_train_s]), flatten(target_crops[:n_train_t])])
    train_y = torch.cat(
        [
            torch.zeros(sum(c.shape[0] for c in source_crops[:n_train_s])),
            torch.ones(sum(c.shape[0] for c in target_crops[:n_train_t])),
        ]
    )
    test_x = torch.cat([flatten(source_crops[n_train_s:]), flatten(target_crops[n_train_t:])])
    test_y = torch.cat(
        [
            torch.zeros(sum(c.shape[0] for c in source_crops[n_train_s:])),
            torch.ones(sum(c.shape[0] for c in target_crops[n_train_t:])),
        ]
    )

    seed_everything(seed)
    probe = DomainClassifier(channels)
    opt = torch.optim.Adam(probe.parameters(), lr=lr)
    bce = torch.nn.BCEWithLogitsLoss()
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(train_x))
        for start in range(0, len(order), batch):
            sel = torch.as_tensor(order[start : start + batch])
            opt.zero_grad(set_to_none=True)
            loss = bce(probe(train_x[sel]), train_y[sel])
            loss.backward()
            opt.step()
    probe.eval()
    with torch.no_grad():
        pred = (torch.sigmoid(probe(test_x)) >= 0.5).float()
    return float((pred == test_y).float().mean())


def run_probe(
    ablation_dir: Path,
    seeds: list[int],
    probe_seed_offset: int = 9000,
) -> dict:
    """Compare domain separability of baseline vs adapted trunk features.

    Expects the directory layout produced by ``run_ablation``; uses each
    seed's validation splits, which no detector ever trained on.
    """
    ablation_dir = Path(ablation_dir)
    per_seed = {}
    base_accs, adapted_accs = [], []
    for seed in seeds:
        seed_dir = ablation_dir / f"seed{seed}"
        data_dir = seed_dir / "data"
        source_val = load_manifest(data_dir / "source_val.json")
        target_val = load_manifest(data_dir / "target_val.json")
        source_images = [source_val.load_record(i).image for i in range(len(source_val))]
        target_images = [target_val.load_record(i).image for i in range(len(target_val))]

        baseline_payload = load_checkpoint(seed_dir / "baseline" / "detector" / "detector.pt")
        cfg = TrainConfig.from_dict(baseline_payload["config"])
        baseline_det = build_detector(cfg)
        baseline_det.load_state_dict(baseline_payload["models"]["detector"])

        joint_payload = load_checkpoint(seed_dir / "pda_fda" / "joint" / "joint.pt")
        joint_cfg = TrainConfig.from_dict(joint_payload["config"])
        adapted_det = build_detector(joint_cfg)
        adapted_det.load_state_dict(joint_payload["models"]["detector"])
        translation = build_translation_model(joint_cfg)
        translation.gen_st.load_state_dict(joint_payload["models"]["gen_st"])
        translation.gen_st.eval()

        channels = cfg.detector.feature_channels
        base_acc = _probe_accuracy(
            _collect_crops(baseline_det, source_images),
            _collect_crops(baseline_det, target_images),
            channels,
            seed + probe_seed_offset,
        )
        adapted_acc = _probe_accuracy(
            _collect_crops(adapted_det, source_images, translator=translation.gen_st),
            _collect_crops(adapted_det, target_images),
            channels,
            seed + probe_seed_offset,
        )
        per_seed[str(seed)] = {"baseline_acc": base_acc, "adapted_acc": adapted_acc}
        base_accs.append(base_acc)
        adapted_accs.append(adapted_acc)

    summary = {
        "per_seed": per_seed,
        "baseline_mean_acc": float(np.mean(base_accs)),
        "adapted_mean_acc": float(np.mean(adapted_accs)),
    }
    with open(ablation_dir / "probe_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary
