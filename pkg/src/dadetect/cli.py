"""Command-line interface.

One entry point with subcommands (a bare ``eval`` script would be shadowed
by the shell builtin, so everything lives under ``dadetect``)::

    dadetect gen-data --scenario clean2fog --out DIR --seed 0 --n-train 500 --n-val 100
    dadetect train-pda --data DIR --out DIR --epochs 60 --lambda-cyc 10 --seed 0
    dadetect translate --ckpt FILE --direction s2t --in DIR|MANIFEST --out DIR
    dadetect train-det --data DIR --out DIR --epochs 9 --seed 0 [--source-style translated --pda-ckpt FILE]
    dadetect train-fda --data DIR --out DIR --lambda1 0.5 --seed 0 [--source-style translated --pda-ckpt FILE]
    dadetect train-joint --config FILE --pda-ckpt FILE --det-ckpt FILE [--set key=value]
    dadetect infer --ckpt FILE --in DIR|MANIFEST --out FILE --short-side 128
    dadetect ablate --scenario clean2fog --seeds 3 --out DIR [--n-train 500 --n-val 100 --jobs 1]
    dadetect eval --dets FILE --manifest FILE --iou 0.5 --ap-rule allpoints --out DIR
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _add_set(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable; detector.* reaches the detector config)",
    )


def _build_config(args, **direct):
    from .training.config import TrainConfig

    cfg = TrainConfig()
    for key, value in direct.items():
        if value is not None:
            cfg = cfg.replace(**{key: value})
    if getattr(args, "overrides", None):
        cfg = cfg.with_overrides(args.overrides)
    return cfg


def cmd_gen_data(args) -> int:
    from .data.styles import scenario_styles
    from .data.synth import generate_domain_pair

    source_style, target_style = scenario_styles(args.scenario)
    manifests = generate_domain_pair(
        seed=args.seed,
        source_style=source_style,
        target_style=target_style,
        n_train=args.n_train,
        n_val=args.n_val,
        out_dir=args.out,
    )
    for key, manifest in manifests.items():
        print(f"{key}: {len(manifest)} records")
    print(f"wrote dataset to {args.out}")
    return 0


def cmd_train_pda(args) -> int:
    from .training.loops import train_translation

    cfg = _build_config(
        args,
        regime="pda",
        data_dir=args.data,
        out_dir=args.out,
        seed=args.seed,
        pda_epochs=args.epochs,
        lambda_cyc=args.lambda_cyc,
    )
    ckpt = train_translation(cfg, Path(args.out))
    print(f"translation checkpoint: {ckpt}")
    return 0


def _iter_input_images(path: Path):
    """Yield (image_id, image) from a manifest file or a directory of PNGs."""
    from .data.manifest import load_image, load_manifest

    path = Path(path)
    if path.is_file() and path.suffix == ".json":
        manifest = load_manifest(path)
        for i in range(len(manifest)):
            record = manifest.load_record(i)
            yield record.image_id, record.image
    elif path.is_dir():
        for png in sorted(path.glob("*.png")):
            yield png.stem, load_image(png)
    else:
        raise SystemExit(f"--in must be a manifest .json or a directory: {path}")


def cmd_translate(args) -> int:
    import numpy as np

    from .evaluation.report import save_grid
    from .data.manifest import save_image
    from .torchutil import from_pm1, image_to_tensor, tensor_to_image, to_pm1
    from .training.loops import load_translation_model
    from .translation.networks import translate

    model, _ = load_translation_model(Path(args.ckpt))
    forward = args.direction
    inverse = "t2s" if forward == "s2t" else "s2t"
    out_dir = Path(args.out)
    count = 0
    for image_id, image in _iter_input_images(args.input):
        tensor = to_pm1(image_to_tensor(image))
        fake = translate(model, tensor, forward)
        rec = translate(model, fake, inverse)
        fake_img = tensor_to_image(from_pm1(fake))
        rec_img = tensor_to_image(from_pm1(rec))
        save_image(fake_img, out_dir / f"{image_id}_translated.png")
        save_grid([[np.asarray(image), fake_img, rec_img]], out_dir / f"{image_id}_triplet.png")
        count += 1
    print(f"translated {count} images into {out_dir}")
    return 0


def _resolve_source_manifest(args, cfg, out_dir: Path) -> Path:
    """Raw source train manifest, or the pda-translated version of it."""
    from .data.manifest import load_manifest
    from .training.loops import load_translation_model, translate_manifest

    source = Path(args.data) / "source_train.json"
    if args.source_style == "raw":
        return source
    if not args.pda_ckpt:
        raise SystemExit("--source-style translated requires --pda-ckpt")
    model, _ = load_translation_model(Path(args.pda_ckpt))
    _, path = translate_manifest(model, load_manifest(source), out_dir / "translated")
    return path


def cmd_train_det(args) -> int:
    from .training.loops import train_detector

    cfg = _build_config(
        args,
        regime="pda" if args.source_style == "translated" else "baseline",
        data_dir=args.data,
        out_dir=args.out,
        seed=args.seed,
        det_epochs=args.epochs,
    )
    source = _resolve_source_manifest(args, cfg, Path(args.out))
    ckpt = train_detector(cfg, Path(args.out), source)
    print(f"detector checkpoint: {ckpt}")
    return 0


def cmd_train_fda(args) -> int:
    from .training.loops import train_detector

    cfg = _build_config(
        args,
        regime="fda",
        data_dir=args.data,
        out_dir=args.out,
        seed=args.seed,
        det_epochs=args.epochs,
        lambda1=args.lambda1,
    )
    source = _resolve_source_manifest(args, cfg, Path(args.out))
    ckpt = train_detector(
        cfg,
        Path(args.out),
        source,
        adapt=True,
        target_manifest=Path(args.data) / "target_train.json",
    )
    print(f"adapted detector checkpoint: {ckpt}")
    return 0


def cmd_train_joint(args) -> int:
    from .training.config import TrainConfig
    from .training.loops import run_joint

    cfg = TrainConfig.load(Path(args.config))
    if args.overrides:
        cfg = cfg.with_overrides(args.overrides)
    out_dir = Path(cfg.out_dir or Path(args.config).parent / "joint")
    ckpt = run_joint(cfg, Path(args.pda_ckpt), Path(args.det_ckpt), out_dir)
    print(f"joint checkpoint: {ckpt}")
    return 0


def cmd_infer(args) -> int:
    from .detection.pipeline import detect, detections_entry, write_detections
    from .training.loops import load_detector

    detector, _ = load_detector(Path(args.ckpt))
    entries = []
    for image_id, image in _iter_input_images(args.input):
        dets = detect(detector, image, short_side=args.short_side, score_thresh=args.score_thresh)
        entries.append(detections_entry(image_id, dets))
    write_detections(entries, Path(args.out))
    print(f"wrote detections for {len(entries)} images to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    from .training.ablation import run_ablation

    cfg = _build_config(args)
    seeds = list(range(args.seeds))
    table = run_ablation(
        args.scenario,
        seeds,
        Path(args.out),
        n_train=args.n_train,
        n_val=args.n_val,
        base_cfg=cfg,
        jobs=args.jobs,
    )
    for row in table["rows"]:
        print(f"{row['regime']:>9}: mAP {row['map']:.4f} ({row['delta_vs_baseline']:+.4f})")
    return 0


def cmd_eval(args) -> int:
    from .data.manifest import load_manifest
    from .evaluation.ap import evaluate
    from .evaluation.report import emit_eval_report

    report = evaluate(
        Path(args.dets),
        load_manifest(Path(args.manifest)),
        iou_threshold=args.iou,
        rule=args.ap_rule,
    )
    print(json.dumps({k: (v.ap if v.ap is None else round(v.ap, 4)) for k, v in report.per_class.items()}))
    print(f"mAP@{args.iou:g} = {report.map:.4f}")
    if args.out:
        paths = emit_eval_report(report, Path(args.out))
        print(f"report written to {paths['json']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dadetect", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic two-domain dataset")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-val", type=int, default=100)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-pda", help="train the image translation networks")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lambda-cyc", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    _add_set(p)
    p.set_defaults(func=cmd_train_pda)

    p = sub.add_parser("translate", help="translate images, emitting triplet grids")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--direction", choices=("s2t", "t2s"), default="s2t")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("train-det", help="train the plain detector")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source-style", choices=("raw", "translated"), default="raw")
    p.add_argument("--pda-ckpt", default=None)
    _add_set(p)
    p.set_defaults(func=cmd_train_det)

    p = sub.add_parser("train-fda", help="train the detector with domain-adversarial adaptation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda1", type=float, default=0.5)
    p.add_argument("--source-style", choices=("raw", "translated"), default="raw")
    p.add_argument("--pda-ckpt", default=None)
    _add_set(p)
    p.set_defaults(func=cmd_train_fda)

    p = sub.add_parser("train-joint", help="end-to-end finetuning from two pretrained checkpoints")
    p.add_argument("--config", required=True)
    p.add_argument("--pda-ckpt", required=True)
    p.add_argument("--det-ckpt", required=True)
    _add_set(p)
    p.set_defaults(func=cmd_train_joint)

    p = sub.add_parser("infer", help="run detection inference")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--short-side", type=int, default=128)
    p.add_argument("--score-thresh", type=float, default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="run the four-regime ablation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-val", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    _add_set(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="score a detections file against a manifest")
    p.add_argument("--dets", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--ap-rule", choices=("allpoints", "voc07"), default="allpoints")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
