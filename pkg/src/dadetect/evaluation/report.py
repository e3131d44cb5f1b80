"""Report and figure emission: eval tables, PR curves, image grids."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..data.manifest import save_image
from .ap import EvalReport

CLASS_COLORS = (
    (1.0, 0.25, 0.25),
    (0.25, 0.55, 1.0),
    (1.0, 0.9, 0.2),
    (0.4, 1.0, 0.4),
)


def draw_boxes(image: np.ndarray, boxes, class_ids, scores=None, thickness: int = 2) -> np.ndarray:
    """Return a copy of the image with class-colored box outlines."""
    out = np.array(image, dtype=np.float32, copy=True)
    height, width = out.shape[:2]
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    for i, box in enumerate(boxes):
        color = CLASS_COLORS[(int(class_ids[i]) - 1) % len(CLASS_COLORS)]
        x1 = int(np.clip(round(box[0]), 0, width - 1))
        y1 = int(np.clip(round(box[1]), 0, height - 1))
        x2 = int(np.clip(round(box[2]), 1, width))
        y2 = int(np.clip(round(box[3]), 1, height))
        for t in range(thickness):
            out[min(y1 + t, height - 1), x1:x2] = color
            out[max(y2 - 1 - t, 0), x1:x2] = color
            out[y1:y2, min(x1 + t, width - 1)] = color
            out[y1:y2, max(x2 - 1 - t, 0)] = color
    return out


def image_grid(rows: list[list[np.ndarray]], pad: int = 2) -> np.ndarray:
    """Tile images into a grid with white separators; one list per row."""
    cell_h = max(img.shape[0] for row in rows for img in row)
    cell_w = max(img.shape[1] for row in rows for img in row)
    n_cols = max(len(row) for row in rows)
    grid = np.ones(
        (len(rows) * (cell_h + pad) - pad, n_cols * (cell_w + pad) - pad, 3),
        dtype=np.float32,
    )
    for r, row in enumerate(rows):
        for c, img in enumerate(row):
            y = r * (cell_h + pad)
            x = c * (cell_w + pad)
            grid[y : y + img.shape[0], x : x + img.shape[1]] = img
    return grid


def save_grid(rows: list[list[np.ndarray]], path: Path) -> None:
    save_image(image_grid(rows), path)


def emit_eval_report(report: EvalReport, out_dir: Path, prefix: str = "eval") -> dict[str, Path]:
    """Write an EvalReport as JSON + markdown + one PR plot per class."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    json_path = out_dir / f"{prefix}_report.json"
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
    paths["json"] = json_path

    lines = [
        f"| class | AP@{report.iou_threshold:g} | GT boxes |",
        "|---|---|---|",
    ]
    for name, entry in report.per_class.items():
        ap_str = "n/a" if entry.ap is None else f"{entry.ap:.4f}"
        lines.append(f"| {name} | {ap_str} | {entry.gt_count} |")
    lines.append(f"| **mAP** | **{report.map:.4f}** | |")
    md_path = out_dir / f"{prefix}_report.md"
    md_path.write_text("\n".join(lines) + "\n")
    paths["markdown"] = md_path

    for name, entry in report.per_class.items():
        if entry.ap is None or len(entry.recalls) == 0:
            continue
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.plot(entry.recalls, entry.precisions, drawstyle="steps-post")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.01)
        ax.set_ylim(0, 1.05)
        ax.set_title(f"{name}: AP={entry.ap:.3f}")
        fig.tight_layout()
        pr_path = out_dir / f"{prefix}_pr_{name}.png"
        fig.savefig(pr_path, dpi=100)
        plt.close(fig)
        paths[f"pr_{name}"] = pr_path
    return paths


def emit_comparison_grids(rows, out_dir: Path, suffix: str = "_grid") -> list[Path]:
    """One (source | translated | detection overlay) grid per image.

    ``rows`` yields ``(image_id, source_img, translated_img, overlay_img)``;
    each grid lands at ``<out_dir>/<image_id><suffix>.png``.
    """
    out_dir = Path(out_dir)
    paths = []
    for image_id, source, translated, overlay in rows:
        path = out_dir / f"{image_id}{suffix}.png"
        save_grid([[np.asarray(source), np.asarray(translated), np.asarray(overlay)]], path)
        paths.append(path)
    return paths


def ablation_table(results: dict[str, dict], baseline_key: str = "baseline") -> dict:
    """Build the regime-vs-mAP table with deltas against the baseline row.

    ``results`` maps regime name to {"map": float, ...}; per-seed values may
    ride along under "seeds".
    """
    base = results[baseline_key]["map"]
    rows = []
    for regime, payload in results.items():
        rows.append(
            {
                "regime": regime,
                "map": payload["map"],
                "delta_vs_baseline": payload["map"] - base,
                "seeds": payload.get("seeds", {}),
            }
        )
    return {"baseline": baseline_key, "rows": rows}


def ablation_markdown(table: dict) -> str:
    lines = ["| regime | mAP | delta vs baseline |", "|---|---|---|"]
    for row in table["rows"]:
        lines.append(
            f"| {row['regime']} | {row['map']:.4f} | {row['delta_vs_baseline']:+.4f} |"
        )
    return "\n".join(lines) + "\n"


def write_ablation_table(table: dict, out_dir: Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "ablation_table.json"
    with open(json_path, "w") as fh:
        json.dump(table, fh, indent=1)
    md_path = out_dir / "ablation_table.md"
    md_path.write_text(ablation_markdown(table))
    return json_path, md_path
