"""Sample records, dataset manifests and their JSON/PNG persistence.

The manifest JSON schema is the package's dataset interchange format::

    {name, split, class_names: [...], image_size: [H, W],
     records: [{image_id, path, domain, has_labels,
                boxes: [{x1, y1, x2, y2, class_id}]}]}

Image paths are stored relative to the manifest file. Unlabeled records
(``has_labels=false``) carry no boxes on disk and raise
:class:`LabelLeakError` when anything tries to read boxes in memory; this is
the guard that keeps target-domain annotations out of every training path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry import validate_boxes

DOMAINS = ("source", "target")
SPLITS = ("train", "val")


class LabelLeakError(RuntimeError):
    """Ground-truth boxes of an unlabeled record were accessed."""


class ManifestError(ValueError):
    """A manifest file or one of its records failed validation."""


@dataclass
class SampleRecord:
    """One image with an optional set of ground-truth boxes.

    ``boxes`` is an ``(K, 4)`` corner-format array and ``class_ids`` a
    matching ``(K,)`` int array with values in ``1..m`` (0 is reserved for
    background). Both are only readable when ``has_labels`` is true.
    """

    image_id: str
    image: np.ndarray
    domain: str
    has_labels: bool
    _boxes: np.ndarray = field(repr=False, default=None)
    _class_ids: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if self._boxes is None:
            self._boxes = np.zeros((0, 4), dtype=np.float64)
        if self._class_ids is None:
            self._class_ids = np.zeros((0,), dtype=np.int64)
        self._boxes = np.asarray(self._boxes, dtype=np.float64).reshape(-1, 4)
        self._class_ids = np.asarray(self._class_ids, dtype=np.int64).reshape(-1)
        if len(self._boxes) != len(self._class_ids):
            raise ValueError("boxes and class_ids must have equal length")

    @property
    def boxes(self) -> np.ndarray:
        if not self.has_labels:
            raise LabelLeakError(
                f"record {self.image_id!r} is unlabeled; reading its boxes "
                "would leak target-domain ground truth into training"
            )
        return self._boxes

    @property
    def class_ids(self) -> np.ndarray:
        if not self.has_labels:
            raise LabelLeakError(
                f"record {self.image_id!r} is unlabeled; reading its class ids "
                "would leak target-domain ground truth into training"
            )
        return self._class_ids

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def without_labels(self) -> "SampleRecord":
        """Copy with ground truth stripped (the UDA training view)."""
        return SampleRecord(
            image_id=self.image_id,
            image=self.image,
            domain=self.domain,
            has_labels=False,
        )


@dataclass
class ManifestRecord:
    """Lightweight on-disk reference to one sample."""

    image_id: str
    path: str
    domain: str
    has_labels: bool
    boxes: list[dict]


@dataclass
class DatasetManifest:
    """An ordered image collection with class vocabulary and fixed size."""

    name: str
    split: str
    class_names: list[str]
    image_size: tuple[int, int]
    records: list[ManifestRecord]
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def image_path(self, index: int) -> Path:
        return self.root / self.records[index].path

    def load_record(self, index: int) -> SampleRecord:
        """Materialize one record, loading its image from disk."""
        ref = self.records[index]
        image = load_image(self.root / ref.path)
        boxes = np.array(
            [[b["x1"], b["y1"], b["x2"], b["y2"]] for b in ref.boxes],
            dtype=np.float64,
        ).reshape(-1, 4)
        classes = np.array([b["class_id"] for b in ref.boxes], dtype=np.int64)
        return SampleRecord(
            image_id=ref.image_id,
            image=image,
            domain=ref.domain,
            has_labels=ref.has_labels,
            _boxes=boxes,
            _class_ids=classes,
        )

    def iter_records(self):
        for i in range(len(self)):
            yield self.load_record(i)


def save_image(image: np.ndarray, path: Path) -> None:
    """Write a float [0,1] HxWx3 image as an 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((data * 255.0).round().astype(np.uint8)).save(path)


def load_image(path: Path) -> np.ndarray:
    """Load a PNG as float32 [0,1] HxWx3."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def record_to_manifest_entry(record: SampleRecord, path: str) -> ManifestRecord:
    boxes: list[dict] = []
    if record.has_labels:
        for box, cls in zip(record.boxes, record.class_ids):
            boxes.append(
                {
                    "x1": float(box[0]),
                    "y1": float(box[1]),
                    "x2": float(box[2]),
                    "y2": float(box[3]),
                    "class_id": int(cls),
                }
            )
    return ManifestRecord(
        image_id=record.image_id,
        path=path,
        domain=record.domain,
        has_labels=record.has_labels,
        boxes=boxes,
    )


def save_manifest(manifest: DatasetManifest, path: Path) -> None:
    """Serialize a manifest to JSON next to its images."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "name": manifest.name,
        "split": manifest.split,
        "class_names": list(manifest.class_names),
        "image_size": [int(manifest.image_size[0]), int(manifest.image_size[1])],
        "records": [
            {
                "image_id": r.image_id,
                "path": r.path,
                "domain": r.domain,
                "has_labels": r.has_labels,
                "boxes": r.boxes,
            }
            for r in manifest.records
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_manifest(path: Path, check_images: bool = True) -> DatasetManifest:
    """Load and validate a manifest JSON file.

    Raises :class:`ManifestError` naming the offending record for missing
    image files, malformed entries, out-of-range class ids, or boxes
    outside the image bounds.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    for key in ("name", "split", "class_names", "image_size", "records"):
        if key not in payload:
            raise ManifestError(f"manifest {path} missing field {key!r}")
    if payload["split"] not in SPLITS:
        raise ManifestError(f"manifest {path}: bad split {payload['split']!r}")
    if not payload["records"]:
        raise ManifestError(f"manifest {path} has no records")

    num_classes = len(payload["class_names"])
    height, width = (int(v) for v in payload["image_size"])
    root = path.parent
    records = []
    for index, raw in enumerate(payload["records"]):
        where = f"manifest {path} record {index}"
        try:
            record = ManifestRecord(
                image_id=raw["image_id"],
                path=raw["path"],
                domain=raw["domain"],
                has_labels=bool(raw["has_labels"]),
                boxes=list(raw.get("boxes", [])),
            )
        except KeyError as exc:
            raise ManifestError(f"{where}: missing field {exc}") from exc
        if record.domain not in DOMAINS:
            raise ManifestError(f"{where}: bad domain {record.domain!r}")
        if check_images and not (root / record.path).is_file():
            raise ManifestError(
                f"{where} ({record.image_id}): image file not found: "
                f"{root / record.path}"
            )
        for box in record.boxes:
            cls = int(box["class_id"])
            if not 1 <= cls <= num_classes:
                raise ManifestError(
                    f"{where} ({record.image_id}): class_id {cls} outside "
                    f"[1..{num_classes}]"
                )
            coords = np.array([[box["x1"], box["y1"], box["x2"], box["y2"]]])
            try:
                validate_boxes(coords)
            except ValueError as exc:
                raise ManifestError(f"{where} ({record.image_id}): {exc}") from exc
            if (
                coords[0, 0] < 0
                or coords[0, 1] < 0
                or coords[0, 2] > width
                or coords[0, 3] > height
            ):
                raise ManifestError(
                    f"{where} ({record.image_id}): box {coords[0].tolist()} "
                    f"outside image bounds {width}x{height}"
                )
        records.append(record)

    return DatasetManifest(
        name=payload["name"],
        split=payload["split"],
        class_names=list(payload["class_names"]),
        image_size=(height, width),
        records=records,
        root=root,
    )


def resize_shorter_side(record: SampleRecord, target_short: int) -> SampleRecord:
    """Bilinearly resize so the shorter image side equals ``target_short``.

    Aspect ratio is preserved and boxes are scaled by the same factor, so
    pairwise IoU is unchanged.
    """
    import torch
    import torch.nn.functional as F

    if target_short < 32:
        raise ValueError(f"target_short must be >= 32, got {target_short}")
    height, width = record.image.shape[:2]
    scale = target_short / min(height, width)
    new_h = int(round(height * scale))
    new_w = int(round(width * scale))
    if (new_h, new_w) == (height, width):
        return record
    tensor = torch.from_numpy(
        np.ascontiguousarray(record.image.transpose(2, 0, 1))[None]
    ).float()
    resized = F.interpolate(
        tensor, size=(new_h, new_w), mode="bilinear", align_corners=False
    )
    image = resized[0].numpy().transpose(1, 2, 0)
    return SampleRecord(
        image_id=record.image_id,
        image=np.clip(image, 0.0, 1.0),
        domain=record.domain,
        has_labels=record.has_labels,
        _boxes=record._boxes * scale,
        _class_ids=record._class_ids,
    )
