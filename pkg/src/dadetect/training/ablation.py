"""Ablation and control experiments: four regimes, shared seeds, one table.

Every (seed, stage) pair caches its artifacts under a config-hash marker,
so interrupted or repeated invocations resume instead of retraining; delete
the output directory to force a clean rerun.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..data.styles import scenario_styles
from ..data.synth import generate_domain_pair
from ..data.manifest import load_manifest
from ..evaluation.report import ablation_table, write_ablation_table
from .config import TrainConfig
from .loops import (
    evaluate_detector,
    load_detector,
    run_joint,
    run_pretrain,
)

REGIME_ORDER = ("baseline", "fda", "pda", "pda+fda")


def _stage_hash(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()
    ).hexdigest()


def _cached_result(stage_dir: Path, expected: str) -> dict | None:
    marker = stage_dir / "stage.json"
    if not marker.is_file():
        return None
    data = json.loads(marker.read_text())
    if data.get("config_hash") != expected or not data.get("completed"):
        return None
    return data["result"]


def _mark_done(stage_dir: Path, config_hash: str, result: dict) -> None:
    stage_dir.mkdir(parents=True, exist_ok=True)
    with open(stage_dir / "stage.json", "w") as fh:
        json.dump({"config_hash": config_hash, "completed": True, "result": result}, fh, indent=1)


def _hash_payload(cfg: TrainConfig, **extra) -> dict:
    payload = cfg.to_dict()
    payload.pop("data_dir", None)
    payload.pop("out_dir", None)
    payload.update(extra)
    return payload


def ensure_dataset(
    scenario: str,
    seed: int,
    data_dir: Path,
    n_train: int,
    n_val: int,
    image_size: tuple[int, int] = (128, 128),
) -> Path:
    """Generate the scenario's domain pair for one seed unless cached."""
    data_dir = Path(data_dir)
    payload = {
        "scenario": scenario,
        "seed": seed,
        "n_train": n_train,
        "n_val": n_val,
        "image_size": list(image_size),
    }
    expected = _stage_hash(payload)
    if _cached_result(data_dir, expected) is not None:
        return data_dir
    source_style, target_style = scenario_styles(scenario)
    generate_domain_pair(
        seed=seed,
        source_style=source_style,
        target_style=target_style,
        n_train=n_train,
        n_val=n_val,
        out_dir=data_dir,
        size=image_size,
    )
    _mark_done(data_dir, expected, {"generated": True})
    return data_dir


def _eval_both_vals(detector_ckpt: Path, data_dir: Path) -> dict:
    detector, _ = load_detector(detector_ckpt)
    target_report, _ = evaluate_detector(
        detector, load_manifest(data_dir / "target_val.json")
    )
    source_report, _ = evaluate_detector(
        detector, load_manifest(data_dir / "source_val.json")
    )
    return {
        "map": target_report.map,
        "source_val_map": source_report.map,
        "per_class": {k: v.ap for k, v in target_report.per_class.items()},
    }


def _emit_qualitative_grids(joint_ckpt: Path, data_dir: Path, out_dir: Path, count: int = 4) -> None:
    """(source | translated | detections-on-translated) grids for a few
    validation images, named by image id."""
    import torch

    from ..detection.pipeline import detect
    from ..evaluation.report import draw_boxes, emit_comparison_grids
    from ..torchutil import from_pm1, image_to_tensor, tensor_to_image, to_pm1
    from ..translation.networks import translate
    from .checkpoint import load_checkpoint
    from .config import TrainConfig
    from .loops import build_detector, build_translation_model

    payload = load_checkpoint(joint_ckpt, expect_kind="joint")
    cfg = TrainConfig.from_dict(payload["config"])
    translation = build_translation_model(cfg)
    translation.gen_st.load_state_dict(payload["models"]["gen_st"])
    detector = build_detector(cfg)
    detector.load_state_dict(payload["models"]["detector"])
    detector.eval()

    manifest = load_manifest(data_dir / "source_val.json")
    rows = []
    for i in range(min(count, len(manifest))):
        record = manifest.load_record(i)
        fake = from_pm1(
            translate(translation, to_pm1(image_to_tensor(record.image)), "s2t")
        )
        fake_img = tensor_to_image(fake)
        dets = detect(detector, fake_img)
        overlay = draw_boxes(
            fake_img,
            [d.box for d in dets if d.score >= 0.5],
            [d.class_id for d in dets if d.score >= 0.5],
        )
        rows.append((record.image_id, record.image, fake_img, overlay))
    emit_comparison_grids(rows, out_dir)


def run_regime(
    base_cfg: TrainConfig,
    regime: str,
    seed: int,
    data_dir: Path,
    seed_dir: Path,
    pda_artifacts: dict | None = None,
) -> dict:
    """Train one regime for one seed (resuming from cache) and score it."""
    stage_dir = Path(seed_dir) / regime.replace("+", "_")
    cfg = base_cfg.replace(
        regime=regime, seed=seed, data_dir=str(data_dir), out_dir=str(stage_dir)
    )
    expected = _stage_hash(_hash_payload(cfg, stage=regime))
    cached = _cached_result(stage_dir, expected)
    if cached is not None:
        return cached

    if regime == "pda+fda":
        if not pda_artifacts:
            raise ValueError("the joint regime needs the pda artifacts")
        joint_ckpt = run_joint(
            cfg,
            Path(pda_artifacts["translation"]),
            Path(pda_artifacts["detector"]),
            stage_dir / "joint",
        )
        result = _eval_both_vals(joint_ckpt, data_dir)
        result["checkpoint"] = str(joint_ckpt)
        _emit_qualitative_grids(joint_ckpt, data_dir, stage_dir / "grids")
    else:
        paths = run_pretrain(cfg)
        result = _eval_both_vals(paths["detector"], data_dir)
        result["checkpoint"] = str(paths["detector"])
        if "translation" in paths:
            result["translation_checkpoint"] = str(paths["translation"])
    _mark_done(stage_dir, expected, result)
    return result


def run_seed_lane(
    scenario: str,
    seed: int,
    out_dir: Path,
    base_cfg: TrainConfig,
    n_train: int,
    n_val: int,
) -> dict[str, dict]:
    """All four regimes for one seed, sharing its generated dataset and
    reusing the pda translation/detector artifacts for the joint regime."""
    seed_dir = Path(out_dir) / f"seed{seed}"
    data_dir = ensure_dataset(scenario, seed, seed_dir / "data", n_train, n_val)
    results: dict[str, dict] = {}
    results["baseline"] = run_regime(base_cfg, "baseline", seed, data_dir, seed_dir)
    results["fda"] = run_regime(base_cfg, "fda", seed, data_dir, seed_dir)
    results["pda"] = run_regime(base_cfg, "pda", seed, data_dir, seed_dir)
    pda_artifacts = {
        "translation": results["pda"]["translation_checkpoint"],
        "detector": results["pda"]["checkpoint"],
    }
    results["pda+fda"] = run_regime(
        base_cfg, "pda+fda", seed, data_dir, seed_dir, pda_artifacts
    )
    return results


def _lane_worker(args) -> tuple[int, dict]:
    scenario, seed, out_dir, cfg_dict, n_train, n_val, threads = args
    import torch

    torch.set_num_threads(threads)
    cfg = TrainConfig.from_dict(cfg_dict)
    return seed, run_seed_lane(scenario, seed, Path(out_dir), cfg, n_train, n_val)


def run_ablation(
    scenario: str,
    seeds: list[int],
    out_dir: Path,
    n_train: int = 500,
    n_val: int = 100,
    base_cfg: TrainConfig | None = None,
    jobs: int = 1,
) -> dict:
    """Train all four regimes over the given seeds and emit the mAP table.

    ``jobs > 1`` runs seed lanes as separate single-threaded processes
    (regimes only coordinate through the filesystem).
    """
    out_dir = Path(out_dir)
    base_cfg = base_cfg or TrainConfig()
    per_seed: dict[int, dict] = {}
    if jobs > 1:
        tasks = [
            (scenario, seed, str(out_dir), base_cfg.to_dict(), n_train, n_val, 1)
            for seed in seeds
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for seed, results in pool.map(_lane_worker, tasks):
                per_seed[seed] = results
    else:
        for seed in seeds:
            per_seed[seed] = run_seed_lane(scenario, seed, out_dir, base_cfg, n_train, n_val)

    results = {}
    for regime in REGIME_ORDER:
        seed_maps = {str(seed): per_seed[seed][regime]["map"] for seed in seeds}
        results[regime] = {
            "map": float(np.mean(list(seed_maps.values()))),
            "seeds": seed_maps,
        }
    table = ablation_table(results)
    table["scenario"] = scenario
    table["n_train"] = n_train
    table["n_val"] = n_val
    table["seed_list"] = list(seeds)
    write_ablation_table(table, out_dir)
    return table


def run_nogap_control(
    seeds: list[int],
    out_dir: Path,
    n_train: int = 500,
    n_val: int = 100,
    base_cfg: TrainConfig | None = None,
) -> dict:
    """Identical source/target styles: the baseline detector should score
    nearly the same on both validation splits."""
    from ..data.styles import CLEAN

    out_dir = Path(out_dir)
    base_cfg = base_cfg or TrainConfig()
    gaps = []
    per_seed = {}
    for seed in seeds:
        seed_dir = out_dir / f"seed{seed}"
        data_dir = seed_dir / "data"
        payload = {"scenario": "nogap", "seed": seed, "n_train": n_train, "n_val": n_val}
        expected = _stage_hash(payload)
        if _cached_result(data_dir, expected) is None:
            generate_domain_pair(
                seed=seed,
                source_style=CLEAN,
                target_style=CLEAN,
                n_train=n_train,
                n_val=n_val,
                out_dir=data_dir,
            )
            _mark_done(data_dir, expected, {"generated": True})
        result = run_regime(base_cfg, "baseline", seed, data_dir, seed_dir)
        gap = result["map"] - result["source_val_map"]
        per_seed[str(seed)] = {
            "target_val_map": result["map"],
            "source_val_map": result["source_val_map"],
            "gap": gap,
        }
        gaps.append(gap)
    summary = {
        "per_seed": per_seed,
        "mean_gap": float(np.mean(gaps)),
        "mean_abs_gap": float(np.abs(np.mean(gaps))),
    }
    with open(out_dir / "nogap_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary
