"""Synthetic scene rendering with exact bounding-box ground truth.

Each class maps to a distinct filled shape: class 1 a wide rectangle
("car"), class 2 a tall ellipse ("pedestrian"), class 3 an upward triangle.
Rendering is a pure function of (seed, style, size knobs): the object layout
is drawn from one RNG stream and the photometric stage from a second, so
two styles rendered from the same seed share identical box annotations and
differ only in pixels.
"""

from __future__ import annotations

import numpy as np

from .manifest import (
    DatasetManifest,
    SampleRecord,
    record_to_manifest_entry,
    save_image,
    save_manifest,
)
from .styles import DomainStyleSpec

DEFAULT_CLASS_NAMES = ("car", "pedestrian", "sign")

# Object side length, as a fraction of the shorter image side.
OBJECT_SIZE_RANGE = (0.14, 0.40)
PLACEMENT_ATTEMPTS = 100


class SceneLayoutError(RuntimeError):
    """Requested object count cannot be placed within the overlap budget."""


def _upsample_bilinear(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear upsample of a coarse 2-D grid to (height, width)."""
    gh, gw = grid.shape
    ys = (np.arange(height) + 0.5) / height * gh - 0.5
    xs = (np.arange(width) + 0.5) / width * gw - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, gh - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, gw - 1)
    y1 = np.clip(y0 + 1, 0, gh - 1)
    x1 = np.clip(x0 + 1, 0, gw - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = grid[y0][:, x0] * (1 - wx) + grid[y0][:, x1] * wx
    bot = grid[y1][:, x0] * (1 - wx) + grid[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def _hue_rotation_matrix(amount: float) -> np.ndarray:
    """RGB rotation about the gray axis; amount in [-0.5, 0.5] turns."""
    theta = 2.0 * np.pi * amount
    cos, sin = np.cos(theta), np.sin(theta)
    one_third = 1.0 / 3.0
    sqrt_third = np.sqrt(one_third)
    return np.array(
        [
            [
                cos + (1 - cos) * one_third,
                one_third * (1 - cos) - sqrt_third * sin,
                one_third * (1 - cos) + sqrt_third * sin,
            ],
            [
                one_third * (1 - cos) + sqrt_third * sin,
                cos + one_third * (1 - cos),
                one_third * (1 - cos) - sqrt_third * sin,
            ],
            [
                one_third * (1 - cos) - sqrt_third * sin,
                one_third * (1 - cos) + sqrt_third * sin,
                cos + one_third * (1 - cos),
            ],
        ]
    )


def _shape_mask(
    shape: str, height: int, width: int, cx: float, cy: float, w: float, h: float
) -> np.ndarray:
    xs = np.arange(width) + 0.5
    ys = np.arange(height) + 0.5
    X, Y = np.meshgrid(xs, ys)
    if shape == "rectangle":
        return (
            (X >= cx - w / 2) & (X < cx + w / 2) & (Y >= cy - h / 2) & (Y < cy + h / 2)
        )
    if shape == "ellipse":
        return ((X - cx) / (w / 2)) ** 2 + ((Y - cy) / (h / 2)) ** 2 <= 1.0
    if shape == "triangle":
        # Vertices: apex up, flat base.
        ax, ay = cx, cy - h / 2
        bx, by = cx - w / 2, cy + h / 2
        dx, dy = cx + w / 2, cy + h / 2

        def side(px, py, qx, qy):
            return (qx - px) * (Y - py) - (qy - py) * (X - px)

        s1 = side(ax, ay, bx, by)
        s2 = side(bx, by, dx, dy)
        s3 = side(dx, dy, ax, ay)
        return ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))
    raise ValueError(f"unknown shape {shape!r}")


_CLASS_SHAPES = ("rectangle", "ellipse", "triangle")


def _mask_box(mask: np.ndarray) -> np.ndarray:
    rows = np.where(mask.any(axis=1))[0]
    cols = np.where(mask.any(axis=0))[0]
    return np.array(
        [cols[0], rows[0], cols[-1] + 1.0, rows[-1] + 1.0], dtype=np.float64
    )


def _box_overlap(box: np.ndarray, others: list[np.ndarray]) -> float:
    if not others:
        return 0.0
    from ..geometry import iou_matrix

    return float(iou_matrix(box[None], np.stack(others)).max())


def generate_scene(
    seed: int,
    style: DomainStyleSpec,
    size: tuple[int, int] = (128, 128),
    class_count: int = 3,
    object_count: tuple[int, int] = (1, 4),
    max_overlap: float = 0.3,
    image_id: str | None = None,
    domain: str = "source",
) -> SampleRecord:
    """Render one scene and return it with exact bounding boxes.

    ``max_overlap`` caps the IoU a new object may have with any previous
    one (hard ceiling 0.9); if a placement cannot be found within 100
    attempts the requested ``object_count`` range does not fit and
    :class:`SceneLayoutError` is raised.
    """
    if class_count < 1 or class_count > len(_CLASS_SHAPES):
        raise ValueError(f"class_count must be in [1, {len(_CLASS_SHAPES)}]")
    if not 0.0 <= max_overlap <= 0.9:
        raise ValueError("max_overlap must lie in [0, 0.9]")
    lo, hi = object_count
    if lo < 0 or hi < lo:
        raise ValueError(f"bad object_count range {object_count}")

    height, width = size
    layout_rng = np.random.default_rng([int(seed), 0])
    photo_rng = np.random.default_rng([int(seed), 1])

    # Background: vertical gradient plus coarse value noise.
    base = np.array(style.background_base)
    alt = np.array(style.background_alt)
    ramp = np.linspace(0.0, 1.0, height)[:, None, None]
    image = base[None, None, :] * (1 - ramp) + alt[None, None, :] * ramp
    gh = max(2, height // style.texture_scale)
    gw = max(2, width // style.texture_scale)
    coarse = layout_rng.uniform(-1.0, 1.0, size=(gh, gw))
    image = image + style.texture_strength * _upsample_bilinear(coarse, height, width)[:, :, None]

    count = int(layout_rng.integers(lo, hi + 1))
    short = min(height, width)
    boxes: list[np.ndarray] = []
    classes: list[int] = []
    for _ in range(count):
        cls = int(layout_rng.integers(1, class_count + 1))
        placed = False
        for _ in range(PLACEMENT_ATTEMPTS):
            side = layout_rng.uniform(*OBJECT_SIZE_RANGE) * short
            if cls == 1:
                w, h = side * layout_rng.uniform(1.3, 2.0), side
            elif cls == 2:
                w, h = side, side * layout_rng.uniform(1.4, 2.2)
            else:
                w = h = side
            w, h = min(w, width - 2), min(h, height - 2)
            cx = layout_rng.uniform(w / 2 + 1, width - w / 2 - 1)
            cy = layout_rng.uniform(h / 2 + 1, height - h / 2 - 1)
            mask = _shape_mask(_CLASS_SHAPES[cls - 1], height, width, cx, cy, w, h)
            if not mask.any():
                continue
            box = _mask_box(mask)
            if _box_overlap(box, boxes) <= max_overlap:
                color = np.clip(
                    np.array(style.object_palette[cls - 1])
                    + style.color_jitter * layout_rng.normal(size=3),
                    0.0,
                    1.0,
                )
                image[mask] = color
                boxes.append(box)
                classes.append(cls)
                placed = True
                break
        if not placed:
            raise SceneLayoutError(
                f"could not place object {len(boxes) + 1}/{count} within "
                f"overlap cap {max_overlap} after {PLACEMENT_ATTEMPTS} attempts"
            )

    # Photometric stage; draws come from a separate stream so annotations
    # stay identical across styles for one seed.
    if style.hue_shift != 0.0:
        image = np.clip(image @ _hue_rotation_matrix(style.hue_shift).T, 0.0, 1.0)
    image = (image - 0.5) * style.contrast + 0.5 + style.brightness
    fog_alpha = float(style.fog * photo_rng.uniform(0.85, 1.0))
    if style.fog > 0:
        # Depth-style fog: denser toward the top of the frame. The spatial
        # ramp also keeps the shift from being a single per-channel affine
        # map that feature normalization could silently cancel.
        ramp = (1.2 - 0.8 * np.linspace(0.0, 1.0, height))[:, None, None]
        alpha = np.clip(fog_alpha * ramp, 0.0, 0.95)
        image = (1 - alpha) * image + alpha * np.array(style.fog_color)
    if style.rain > 0:
        streaks = int(round(style.rain * 40))
        for _ in range(streaks):
            x0 = photo_rng.uniform(0, width)
            y0 = photo_rng.uniform(0, height)
            length = photo_rng.uniform(8, 24)
            angle = np.deg2rad(photo_rng.uniform(65, 80))
            steps = np.arange(int(length))
            xs = np.clip((x0 + steps * np.cos(angle)).astype(int), 0, width - 1)
            ys = np.clip((y0 + steps * np.sin(angle)).astype(int), 0, height - 1)
            image[ys, xs] = 0.6 * image[ys, xs] + 0.4 * np.array([0.85, 0.87, 0.9])
    if style.noise > 0:
        image = image + photo_rng.normal(0.0, style.noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)

    return SampleRecord(
        image_id=image_id or f"scene-{seed:08d}",
        image=image,
        domain=domain,
        has_labels=True,
        _boxes=np.stack(boxes) if boxes else None,
        _class_ids=np.array(classes, dtype=np.int64) if classes else None,
    )


def generate_domain_pair(
    seed: int,
    source_style: DomainStyleSpec,
    target_style: DomainStyleSpec,
    n_train: int,
    n_val: int,
    out_dir,
    size: tuple[int, int] = (128, 128),
    class_count: int = 3,
    object_count: tuple[int, int] = (1, 4),
    class_names=DEFAULT_CLASS_NAMES,
) -> dict[str, DatasetManifest]:
    """Generate train/val manifests for a (source, target) domain pair.

    Source splits keep their labels. The target train manifest is stripped
    of all ground truth (the unsupervised-adaptation contract); target val
    keeps labels so detectors can be scored, but no training path reads it.
    Returns manifests keyed by ``"{domain}_{split}"``; files land under
    ``out_dir``.
    """
    from pathlib import Path

    if not source_style.differs_from(target_style):
        # Identical styles are allowed (the no-gap control) but flagged in
        # the manifest name so downstream reports stay readable.
        pass
    out_dir = Path(out_dir)
    manifests: dict[str, DatasetManifest] = {}
    plans = [
        ("source", "train", source_style, n_train, True, 0),
        ("source", "val", source_style, n_val, True, 1),
        ("target", "train", target_style, n_train, False, 2),
        ("target", "val", target_style, n_val, True, 3),
    ]
    for domain, split, style, count, keep_labels, stream in plans:
        if count <= 0:
            raise ValueError(f"{domain} {split}: count must be positive")
        entries = []
        for index in range(count):
            record_seed = np.random.default_rng(
                [int(seed), stream, index]
            ).integers(0, 2**31 - 1)
            record = generate_scene(
                seed=int(record_seed),
                style=style,
                size=size,
                class_count=class_count,
                object_count=object_count,
                image_id=f"{domain}-{split}-{index:05d}",
                domain=domain,
            )
            if not keep_labels:
                record = record.without_labels()
            rel_path = f"images/{domain}/{split}/{record.image_id}.png"
            save_image(record.image, out_dir / rel_path)
            entries.append(record_to_manifest_entry(record, rel_path))
        manifest = DatasetManifest(
            name=f"{source_style.name}2{target_style.name}-{domain}",
            split=split,
            class_names=list(class_names[:class_count]),
            image_size=size,
            records=entries,
            root=out_dir,
        )
        save_manifest(manifest, out_dir / f"{domain}_{split}.json")
        manifests[f"{domain}_{split}"] = manifest
    return manifests
