"""Versioned checkpoint archives for all network bundles."""

from __future__ import annotations

from pathlib import Path

import torch

SCHEMA = "dadetect-checkpoint-v1"
KINDS = ("translation", "detector", "joint")


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(
    path: Path,
    kind: str,
    config_dict: dict,
    epoch: int,
    models: dict[str, torch.nn.Module],
    optimizers: dict[str, torch.optim.Optimizer] | None = None,
) -> Path:
    """Write one archive holding every model/optimizer state plus config."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": SCHEMA,
        "kind": kind,
        "config": config_dict,
        "epoch": int(epoch),
        "models": {name: m.state_dict() for name, m in models.items()},
        "optimizers": {
            name: opt.state_dict() for name, opt in (optimizers or {}).items()
        },
    }
    # Serialize via a buffer so the archive bytes do not depend on the
    # destination file name; equal states then produce equal files.
    import io

    buffer = io.BytesIO()
    torch.save(payload, buffer)
    path.write_bytes(buffer.getvalue())
    return path


def load_checkpoint(path: Path, expect_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("schema") != SCHEMA:
        raise CheckpointError(
            f"{path}: schema {payload.get('schema')!r} does not match {SCHEMA!r}"
        )
    if expect_kind and payload["kind"] != expect_kind:
        raise CheckpointError(
            f"{path}: expected a {expect_kind!r} checkpoint, found {payload['kind']!r}"
        )
    return payload
