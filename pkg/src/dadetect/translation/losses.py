"""Adversarial and cycle-consistency losses for the translation stage.

The adversarial objective is the cross-entropy (log) form: the
discriminator maximizes ``E[log D(real)] + E[log(1 - D(fake))]``, reported
here as the minimized negative sum of both terms, each averaged over
patches and batch. The generator minimizes the non-saturating surrogate
``-E[log D(fake)]``, the standard trainable implementation of its side of
the min-max game. A least-squares variant sits behind ``mode="lsgan"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

PROB_EPS = 1e-7


class TrainingDivergedError(RuntimeError):
    """A loss term became non-finite; names the offending term."""


def check_finite(**terms) -> None:
    import math

    for name, value in terms.items():
        scalar = float(value.detach()) if hasattr(value, "detach") else float(value)
        if not math.isfinite(scalar):
            raise TrainingDivergedError(f"loss term {name!r} is non-finite: {scalar}")


def _log(p: torch.Tensor) -> torch.Tensor:
    return torch.log(p.clamp(PROB_EPS, 1.0 - PROB_EPS))


def discriminator_loss(disc, real: torch.Tensor, fake: torch.Tensor, mode: str = "crossentropy") -> torch.Tensor:
    """Negative discriminator objective (to minimize), per patch and batch."""
    p_real = torch.sigmoid(disc(real))
    p_fake = torch.sigmoid(disc(fake))
    if mode == "lsgan":
        return ((p_real - 1.0) ** 2).mean() + (p_fake**2).mean()
    return -_log(p_real).mean() - _log(1.0 - p_fake).mean()


def generator_adv_loss(disc, fake: torch.Tensor, mode: str = "crossentropy") -> torch.Tensor:
    """Generator's adversarial term on already-generated fakes."""
    p_fake = torch.sigmoid(disc(fake))
    if mode == "lsgan":
        return ((p_fake - 1.0) ** 2).mean()
    return -_log(p_fake).mean()


def gan_loss(disc, real_batch: torch.Tensor, fake_batch: torch.Tensor, mode: str = "crossentropy"):
    """Both sides of the adversarial game for one (real, fake) pair.

    Returns ``(disc_loss, gen_loss)``. A discriminator outputting 0.5
    everywhere gives ``disc_loss = 2 log 2``; one separating perfectly
    gives ~0 (probabilities are clamped at 1e-7 before the log).
    """
    if real_batch.numel() == 0 or fake_batch.numel() == 0:
        raise ValueError("gan_loss batches must be nonempty")
    if real_batch.shape[1:] != fake_batch.shape[1:]:
        raise ValueError(
            f"real/fake shapes disagree: {tuple(real_batch.shape)} vs "
            f"{tuple(fake_batch.shape)}"
        )
    d_loss = discriminator_loss(disc, real_batch, fake_batch, mode)
    g_loss = generator_adv_loss(disc, fake_batch, mode)
    check_finite(disc_loss=d_loss, gen_loss=g_loss)
    return d_loss, g_loss


def cycle_loss(model, batch_s: torch.Tensor, batch_t: torch.Tensor) -> torch.Tensor:
    """Mean L1 reconstruction error around both translation cycles.

    ``|G_ts(G_st(s)) - s| + |G_st(G_ts(t)) - t|``, each averaged over
    pixels and batch; exactly zero for identity generators.
    """
    rec_s = model.gen_ts(model.gen_st(batch_s))
    rec_t = model.gen_st(model.gen_ts(batch_t))
    loss = (rec_s - batch_s).abs().mean() + (rec_t - batch_t).abs().mean()
    check_finite(cycle=loss)
    return loss


@dataclass
class GanLossBreakdown:
    """Translation objective components; ``total`` composes them exactly."""

    gan_st: float
    gan_ts: float
    cyc: float
    lambda_cyc: float
    total: float

    @classmethod
    def compose(cls, gan_st: float, gan_ts: float, cyc: float, lambda_cyc: float):
        return cls(
            gan_st=gan_st,
            gan_ts=gan_ts,
            cyc=cyc,
            lambda_cyc=lambda_cyc,
            total=gan_st + gan_ts + lambda_cyc * cyc,
        )
