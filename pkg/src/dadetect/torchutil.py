"""Small torch-side helpers: image/tensor conversion and seeding."""

from __future__ import annotations

import random

import numpy as np
import torch


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """HxWx3 float [0,1] array -> (1,3,H,W) float32 tensor."""
    return torch.from_numpy(
        np.ascontiguousarray(image.transpose(2, 0, 1))
    ).float()[None]


def tensor_to_image(tensor: torch.Tensor) -> np.ndarray:
    """(1,3,H,W) or (3,H,W) tensor -> HxWx3 float32 array clipped to [0,1]."""
    if tensor.dim() == 4:
        tensor = tensor[0]
    arr = tensor.detach().cpu().numpy().transpose(1, 2, 0)
    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def to_pm1(x: torch.Tensor) -> torch.Tensor:
    """[0,1] image tensor -> [-1,1] (the translation networks' range)."""
    return x * 2.0 - 1.0


def from_pm1(x: torch.Tensor) -> torch.Tensor:
    return (x + 1.0) / 2.0


def seed_everything(seed: int) -> np.random.Generator:
    """Seed torch + stdlib random and return a fresh numpy Generator."""
    torch.manual_seed(seed)
    random.seed(seed)
    return np.random.default_rng(seed)


def parameter_fingerprint(module: torch.nn.Module) -> str:
    """Order-stable hash of all parameters; cheap change detector."""
    import hashlib

    digest = hashlib.sha256()
    for name, param in sorted(module.state_dict().items()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
