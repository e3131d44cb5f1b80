"""Training loops for the three stages and the regime orchestration.

Stages: image translation (alternating min-max), detection (with or
without domain-adversarial adaptation), and the end-to-end joint stage
that finetunes everything from the two pretrained checkpoints at 0.1x
learning rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..data.manifest import (
    DatasetManifest,
    DatasetManifest as _Manifest,
    load_manifest,
    record_to_manifest_entry,
    save_image,
    save_manifest,
)
from ..detection.model import DetectorNet
from ..detection.pipeline import (
    detect,
    detections_entry,
    target_proposals,
    training_forward,
)
from ..domain_adv import (
    DomainClassifier,
    fda_step,
    grad_reverse,
    proposal_domain_loss,
)
from ..evaluation.ap import EvalReport, evaluate
from ..torchutil import from_pm1, image_to_tensor, seed_everything, to_pm1
from ..translation.losses import check_finite, discriminator_loss, generator_adv_loss
from ..translation.networks import TranslationArch, TranslationModel, translate
from ..translation.train import lr_schedule_pda, make_pda_state, pda_train_step, set_lr
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, lr_schedule_detection
from .records import RunRecordWriter


def full_loss(det_term, domain_term, cyc_gan_term, lambda1: float, lambda2: float):
    """The joint objective: ``det + lambda1*domain + lambda2*cyc_gan``.

    Works on floats or tensors; non-finite inputs abort naming the term.
    """
    check_finite(det=det_term, domain=domain_term, cyc_gan=cyc_gan_term)
    return det_term + lambda1 * domain_term + lambda2 * cyc_gan_term


@dataclass
class Split:
    """A manifest preloaded into memory. Unlabeled splits carry no boxes."""

    ids: list[str]
    images: list[np.ndarray]
    boxes: list[np.ndarray] | None
    classes: list[np.ndarray] | None

    def __len__(self) -> int:
        return len(self.ids)


def load_split(manifest: DatasetManifest, with_labels: bool) -> Split:
    ids, images, boxes, classes = [], [], [], []
    for i in range(len(manifest)):
        record = manifest.load_record(i)
        ids.append(record.image_id)
        images.append(record.image)
        if with_labels:
            boxes.append(record.boxes)
            classes.append(record.class_ids)
    return Split(
        ids=ids,
        images=images,
        boxes=boxes if with_labels else None,
        classes=classes if with_labels else None,
    )


def _epoch_order(seed: int, stream: int, epoch: int, n: int, steps: int) -> np.ndarray:
    """Shuffled indices cycled out to ``steps`` entries; deterministic."""
    rng = np.random.default_rng([seed, stream, epoch])
    order = rng.permutation(n)
    if steps <= n:
        return order[:steps]
    reps = -(-steps // n)
    return np.concatenate([rng.permutation(n) if r else order for r in range(reps)])[:steps]


def build_translation_model(cfg: TrainConfig) -> TranslationModel:
    return TranslationModel(
        TranslationArch(gen_base=cfg.gen_base, gen_depth=cfg.gen_depth, disc_base=cfg.disc_base)
    )


def build_detector(cfg: TrainConfig) -> DetectorNet:
    return DetectorNet(cfg.detector)


def train_translation(cfg: TrainConfig, out_dir: Path) -> Path:
    """Train the translation networks on the two unpaired train splits."""
    out_dir = Path(out_dir)
    data_dir = Path(cfg.data_dir)
    source = load_split(load_manifest(data_dir / "source_train.json"), with_labels=False)
    target = load_split(load_manifest(data_dir / "target_train.json"), with_labels=False)

    seed_everything(cfg.seed)
    model = build_translation_model(cfg)
    state = make_pda_state(model, cfg.pda_lr, cfg.lambda_cyc, cfg.gan_mode)

    steps_per_epoch = max(1, max(len(source), len(target)) // cfg.pda_batch)
    step = 0
    with RunRecordWriter(out_dir, {"stage": "translation", "seed": cfg.seed, "config": cfg.to_dict()}) as rec:
        for epoch in range(cfg.pda_epochs):
            lr = lr_schedule_pda(epoch, cfg.pda_epochs, cfg.pda_decay_start, cfg.pda_lr)
            set_lr(state.opt_gen, lr)
            set_lr(state.opt_disc, lr)
            order_s = _epoch_order(cfg.seed, 0, epoch, len(source), steps_per_epoch * cfg.pda_batch)
            order_t = _epoch_order(cfg.seed, 1, epoch, len(target), steps_per_epoch * cfg.pda_batch)
            for k in range(steps_per_epoch):
                sel_s = order_s[k * cfg.pda_batch : (k + 1) * cfg.pda_batch]
                sel_t = order_t[k * cfg.pda_batch : (k + 1) * cfg.pda_batch]
                batch_s = torch.cat([to_pm1(image_to_tensor(source.images[i])) for i in sel_s])
                batch_t = torch.cat([to_pm1(image_to_tensor(target.images[i])) for i in sel_t])
                breakdown = pda_train_step(state, batch_s, batch_t)
                rec.log(
                    step,
                    epoch,
                    {
                        "gan_st": breakdown.gan_st,
                        "gan_ts": breakdown.gan_ts,
                        "cyc": breakdown.cyc,
                        "cyc_gan": breakdown.total,
                        "full": breakdown.total,
                        **state.last_disc,
                    },
                    {"gen": lr, "disc": lr},
                )
                step += 1
        ckpt = save_checkpoint(
            out_dir / "translation.pt",
            "translation",
            cfg.to_dict(),
            cfg.pda_epochs,
            {
                "gen_st": model.gen_st,
                "gen_ts": model.gen_ts,
                "disc_s": model.disc_s,
                "disc_t": model.disc_t,
            },
            {"gen": state.opt_gen, "disc": state.opt_disc},
        )
        rec.add_checkpoint(ckpt)
    return ckpt


def load_translation_model(ckpt_path: Path) -> tuple[TranslationModel, TrainConfig]:
    payload = load_checkpoint(ckpt_path, expect_kind="translation")
    cfg = TrainConfig.from_dict(payload["config"])
    model = build_translation_model(cfg)
    for name in ("gen_st", "gen_ts", "disc_s", "disc_t"):
        getattr(model, name).load_state_dict(payload["models"][name])
    return model, cfg


def translate_manifest(
    model: TranslationModel,
    manifest: DatasetManifest,
    out_dir: Path,
    direction: str = "s2t",
) -> tuple[DatasetManifest, Path]:
    """Translate every image of a manifest, preserving its annotations."""
    out_dir = Path(out_dir)
    entries = []
    for i in range(len(manifest)):
        record = manifest.load_record(i)
        tensor = to_pm1(image_to_tensor(record.image))
        out = from_pm1(translate(model, tensor, direction))[0]
        image = out.numpy().transpose(1, 2, 0)
        rel = f"images/translated/{manifest.split}/{record.image_id}.png"
        save_image(image, out_dir / rel)
        entries.append(record_to_manifest_entry(record, rel))
    translated = _Manifest(
        name=manifest.name + "-translated",
        split=manifest.split,
        class_names=list(manifest.class_names),
        image_size=manifest.image_size,
        records=entries,
        root=out_dir,
    )
    path = out_dir / f"source_{manifest.split}_translated.json"
    save_manifest(translated, path)
    return translated, path


def det_step(
    detector: DetectorNet,
    optimizer: torch.optim.Optimizer,
    image: torch.Tensor,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    rng: np.random.Generator,
):
    optimizer.zero_grad(set_to_none=True)
    forward = training_forward(detector, image, gt_boxes, gt_classes, rng)
    forward.loss.total.backward()
    optimizer.step()
    return forward.loss


def train_detector(
    cfg: TrainConfig,
    out_dir: Path,
    source_manifest: Path,
    adapt: bool = False,
    target_manifest: Path | None = None,
) -> Path:
    """Detection training on a labeled source split.

    With ``adapt=True`` every step also runs the domain-adversarial branch
    against unlabeled target images (which contribute no detection loss).
    """
    out_dir = Path(out_dir)
    source = load_split(load_manifest(Path(source_manifest)), with_labels=True)
    target = None
    if adapt:
        if target_manifest is None:
            raise ValueError("adaptation needs a target manifest")
        target = load_split(load_manifest(Path(target_manifest)), with_labels=False)

    seed_everything(cfg.seed)
    detector = build_detector(cfg)
    classifier = DomainClassifier(cfg.detector.feature_channels) if adapt else None
    params = list(detector.parameters())
    if classifier is not None:
        params += list(classifier.parameters())
    optimizer = torch.optim.SGD(
        params, lr=cfg.det_lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )
    rng = np.random.default_rng([cfg.seed, 101])

    stage = "fda" if adapt else "detector"
    step = 0
    with RunRecordWriter(out_dir, {"stage": stage, "seed": cfg.seed, "config": cfg.to_dict()}) as rec:
        for epoch in range(cfg.det_epochs):
            lr = lr_schedule_detection(
                epoch, cfg.det_lr, cfg.det_lr_drop_epoch, cfg.det_lr_after, cfg.det_epochs
            )
            set_lr(optimizer, lr)
            order = _epoch_order(cfg.seed, 2, epoch, len(source), len(source))
            order_t = (
                _epoch_order(cfg.seed, 3, epoch, len(target), len(source))
                if adapt
                else None
            )
            for k, idx in enumerate(order):
                image = image_to_tensor(source.images[idx])
                gt_boxes = source.boxes[idx]
                gt_classes = source.classes[idx]
                if adapt:
                    t_image = image_to_tensor(target.images[order_t[k]])
                    result = fda_step(
                        detector,
                        classifier,
                        optimizer,
                        image,
                        gt_boxes,
                        gt_classes,
                        t_image,
                        cfg.lambda1,
                        rng,
                    )
                    losses = dict(result.det_components)
                    losses["domain"] = result.domain
                    losses["full"] = result.det + cfg.lambda1 * result.domain
                else:
                    loss = det_step(detector, optimizer, image, gt_boxes, gt_classes, rng)
                    losses = loss.to_floats()
                    losses["full"] = losses["det"]
                rec.log(step, epoch, losses, {"det": lr})
                step += 1
        models = {"detector": detector}
        if classifier is not None:
            models["domain_classifier"] = classifier
        ckpt = save_checkpoint(
            out_dir / "detector.pt",
            "detector",
            cfg.to_dict(),
            cfg.det_epochs,
            models,
            {"det": optimizer},
        )
        rec.add_checkpoint(ckpt)
    return ckpt


def load_detector(ckpt_path: Path) -> tuple[DetectorNet, TrainConfig]:
    payload = load_checkpoint(ckpt_path)
    if payload["kind"] not in ("detector", "joint"):
        raise ValueError(f"{ckpt_path} holds no detector weights")
    cfg = TrainConfig.from_dict(payload["config"])
    detector = build_detector(cfg)
    detector.load_state_dict(payload["models"]["detector"])
    return detector, cfg


def run_joint(cfg: TrainConfig, pda_ckpt: Path, det_ckpt: Path, out_dir: Path) -> Path:
    """End-to-end finetuning of all networks at 0.1x base learning rates.

    Each step translates one source image with the current generator,
    computes the detection loss on it (detached, so detection supervision
    does not steer the generator), the domain loss on its sampled region
    features (label 0) and on target proposals (label 1) through gradient
    reversal, and the translation objective on the same batch; one update
    then reaches every parameter group. Discriminators keep updating while
    the translation term is active.
    """
    out_dir = Path(out_dir)
    data_dir = Path(cfg.data_dir)
    source = load_split(load_manifest(data_dir / "source_train.json"), with_labels=True)
    target = load_split(load_manifest(data_dir / "target_train.json"), with_labels=False)

    translation, _ = load_translation_model(pda_ckpt)
    det_payload = load_checkpoint(det_ckpt, expect_kind="detector")

    seed_everything(cfg.seed)
    detector = build_detector(cfg)
    detector.load_state_dict(det_payload["models"]["detector"])
    classifier = DomainClassifier(cfg.detector.feature_channels)

    lr_gen = cfg.joint_lr_scale * cfg.pda_lr
    lr_det = cfg.joint_lr_scale * cfg.det_lr
    opt_gen = torch.optim.Adam(translation.generator_parameters(), lr=lr_gen, betas=(0.5, 0.999))
    opt_disc = torch.optim.Adam(translation.discriminator_parameters(), lr=lr_gen, betas=(0.5, 0.999))
    opt_det = torch.optim.SGD(
        list(detector.parameters()) + list(classifier.parameters()),
        lr=lr_det,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
    )
    rng = np.random.default_rng([cfg.seed, 202])

    step = 0
    with RunRecordWriter(out_dir, {"stage": "joint", "seed": cfg.seed, "config": cfg.to_dict()}) as rec:
        for epoch in range(cfg.joint_epochs):
            order_s = _epoch_order(cfg.seed, 4, epoch, len(source), len(source))
            order_t = _epoch_order(cfg.seed, 5, epoch, len(target), len(source))
            for k, idx in enumerate(order_s):
                losses = _joint_step(
                    cfg,
                    translation,
                    detector,
                    classifier,
                    opt_gen,
                    opt_disc,
                    opt_det,
                    source.images[idx],
                    source.boxes[idx],
                    source.classes[idx],
                    target.images[order_t[k]],
                    rng,
                )
                rec.log(step, epoch, losses, {"gen": lr_gen, "disc": lr_gen, "det": lr_det})
                step += 1
        ckpt = save_checkpoint(
            out_dir / "joint.pt",
            "joint",
            cfg.to_dict(),
            cfg.joint_epochs,
            {
                "gen_st": translation.gen_st,
                "gen_ts": translation.gen_ts,
                "disc_s": translation.disc_s,
                "disc_t": translation.disc_t,
                "detector": detector,
                "domain_classifier": classifier,
            },
            {"gen": opt_gen, "disc": opt_disc, "det": opt_det},
        )
        rec.add_checkpoint(ckpt)
    return ckpt


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def _joint_step(
    cfg: TrainConfig,
    translation: TranslationModel,
    detector: DetectorNet,
    classifier: DomainClassifier,
    opt_gen,
    opt_disc,
    opt_det,
    source_image: np.ndarray,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    target_image: np.ndarray,
    rng: np.random.Generator,
) -> dict:
    lam1, lam2, lam_cyc = cfg.lambda1, cfg.lambda2, cfg.lambda_cyc
    s_pm1 = to_pm1(image_to_tensor(source_image))
    t_pm1 = to_pm1(image_to_tensor(target_image))

    # Discriminator phase, active only while the translation term is.
    disc_logs = {}
    if lam2 > 0:
        with torch.no_grad():
            fake_t0 = translation.gen_st(s_pm1)
            fake_s0 = translation.gen_ts(t_pm1)
        opt_disc.zero_grad(set_to_none=True)
        loss_d_t = discriminator_loss(translation.disc_t, t_pm1, fake_t0, cfg.gan_mode)
        loss_d_s = discriminator_loss(translation.disc_s, s_pm1, fake_s0, cfg.gan_mode)
        check_finite(disc_t=loss_d_t, disc_s=loss_d_s)
        (loss_d_t + loss_d_s).backward()
        opt_disc.step()
        disc_logs = {"disc_s": float(loss_d_s.detach()), "disc_t": float(loss_d_t.detach())}

    opt_gen.zero_grad(set_to_none=True)
    opt_det.zero_grad(set_to_none=True)

    needs_gen_grad = lam1 > 0 or lam2 > 0
    if needs_gen_grad:
        fake_t = translation.gen_st(s_pm1)
    else:
        with torch.no_grad():
            fake_t = translation.gen_st(s_pm1)

    # Detection stream on the translated image; detached so the detection
    # supervision cannot steer the generator.
    forward = training_forward(detector, from_pm1(fake_t).detach(), gt_boxes, gt_classes, rng)

    zero = torch.zeros(())
    dom = zero
    if lam1 > 0:
        src_feats = detector.extract_features(from_pm1(fake_t))
        src_crops = detector.crop_features(src_feats, forward.roi_sample.boxes)
        tgt_feats, tgt_props = target_proposals(detector, from_pm1(t_pm1))
        tgt_crops = detector.crop_features(tgt_feats, tgt_props.boxes)
        dom = proposal_domain_loss(classifier, grad_reverse(src_crops), grad_reverse(tgt_crops))

    gan_st_v = gan_ts_v = cyc_v = 0.0
    cyc_gan = zero
    if lam2 > 0:
        _set_requires_grad(translation.disc_s, False)
        _set_requires_grad(translation.disc_t, False)
        try:
            fake_s = translation.gen_ts(t_pm1)
            rec_s = translation.gen_ts(fake_t)
            rec_t = translation.gen_st(fake_s)
            gan_st = generator_adv_loss(translation.disc_t, fake_t, cfg.gan_mode)
            gan_ts = generator_adv_loss(translation.disc_s, fake_s, cfg.gan_mode)
            cyc = (rec_s - s_pm1).abs().mean() + (rec_t - t_pm1).abs().mean()
            check_finite(gan_st=gan_st, gan_ts=gan_ts, cyc=cyc)
            cyc_gan = gan_st + gan_ts + lam_cyc * cyc
            gan_st_v, gan_ts_v, cyc_v = (
                float(gan_st.detach()),
                float(gan_ts.detach()),
                float(cyc.detach()),
            )
            total = full_loss(forward.loss.total, dom, cyc_gan, lam1, lam2)
            total.backward()
        finally:
            _set_requires_grad(translation.disc_s, True)
            _set_requires_grad(translation.disc_t, True)
    else:
        total = full_loss(forward.loss.total, dom, cyc_gan, lam1, lam2)
        total.backward()

    opt_gen.step()
    opt_det.step()

    losses = forward.loss.to_floats()
    dom_v = float(dom.detach())
    cyc_gan_v = gan_st_v + gan_ts_v + lam_cyc * cyc_v
    losses.update(
        {
            "domain": dom_v,
            "gan_st": gan_st_v,
            "gan_ts": gan_ts_v,
            "cyc": cyc_v,
            "cyc_gan": cyc_gan_v,
            "full": losses["det"] + lam1 * dom_v + lam2 * cyc_gan_v,
            **disc_logs,
        }
    )
    return losses


def run_pretrain(cfg: TrainConfig) -> dict[str, Path]:
    """Stage the pretraining a regime needs; returns checkpoint paths.

    The translation networks train first (when the regime uses them), then
    the detector: on raw source images for baseline/fda, on the translated
    source set for the pda regimes.
    """
    out_dir = Path(cfg.out_dir)
    data_dir = Path(cfg.data_dir)
    paths: dict[str, Path] = {}

    source_train = data_dir / "source_train.json"
    if cfg.regime in ("pda", "pda+fda"):
        paths["translation"] = train_translation(cfg, out_dir / "translation")
        model, _ = load_translation_model(paths["translation"])
        _, translated_path = translate_manifest(
            model, load_manifest(source_train), out_dir / "translated"
        )
        paths["detector"] = train_detector(cfg, out_dir / "detector", translated_path)
    elif cfg.regime == "fda":
        paths["detector"] = train_detector(
            cfg,
            out_dir / "detector",
            source_train,
            adapt=True,
            target_manifest=data_dir / "target_train.json",
        )
    else:
        paths["detector"] = train_detector(cfg, out_dir / "detector", source_train)
    return paths


def evaluate_detector(
    detector: DetectorNet,
    manifest: DatasetManifest,
    score_thresh: float | None = None,
) -> tuple[EvalReport, list[dict]]:
    """Run inference over a labeled manifest and score it."""
    entries = []
    for i in range(len(manifest)):
        record = manifest.load_record(i)
        dets = detect(detector, record.image, score_thresh=score_thresh)
        entries.append(detections_entry(record.image_id, dets))
    report = evaluate(entries, manifest)
    return report, entries
