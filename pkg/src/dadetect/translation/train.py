"""Optimization step and schedule for the translation networks."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .losses import (
    GanLossBreakdown,
    check_finite,
    discriminator_loss,
    generator_adv_loss,
)
from .networks import TranslationModel


def lr_schedule_pda(epoch: int, total: int = 60, const: int = 30, base: float = 2e-4) -> float:
    """Constant for the first ``const`` epochs, then linear to 0 at ``total``.

    The final epoch runs at learning rate exactly 0.
    """
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside [0, {total})")
    if epoch < const:
        return base
    return base * (1.0 - (epoch - const + 1) / (total - const))


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


@dataclass
class PdaState:
    """Model plus its two optimizers and loss weights for one training run."""

    model: TranslationModel
    opt_gen: torch.optim.Optimizer
    opt_disc: torch.optim.Optimizer
    lambda_cyc: float = 10.0
    gan_mode: str = "crossentropy"
    last_disc: dict = field(default_factory=dict)


def make_pda_state(
    model: TranslationModel,
    lr: float = 2e-4,
    lambda_cyc: float = 10.0,
    gan_mode: str = "crossentropy",
    betas: tuple[float, float] = (0.5, 0.999),
) -> PdaState:
    opt_gen = torch.optim.Adam(model.generator_parameters(), lr=lr, betas=betas)
    opt_disc = torch.optim.Adam(model.discriminator_parameters(), lr=lr, betas=betas)
    return PdaState(model=model, opt_gen=opt_gen, opt_disc=opt_disc, lambda_cyc=lambda_cyc, gan_mode=gan_mode)


def pda_train_step(state: PdaState, batch_s: torch.Tensor, batch_t: torch.Tensor) -> GanLossBreakdown:
    """One alternating min-max update.

    Discriminators first step on their objective with generators frozen,
    then generators step on the adversarial + cycle objective with
    discriminators frozen. Returns the generator-phase loss breakdown
    (computed against the just-updated discriminators); the discriminator
    losses land in ``state.last_disc``.
    """
    model = state.model

    # Discriminator phase: fakes are detached so no generator grads exist.
    with torch.no_grad():
        fake_t = model.gen_st(batch_s)
        fake_s = model.gen_ts(batch_t)
    state.opt_disc.zero_grad(set_to_none=True)
    loss_d_t = discriminator_loss(model.disc_t, batch_t, fake_t, state.gan_mode)
    loss_d_s = discriminator_loss(model.disc_s, batch_s, fake_s, state.gan_mode)
    check_finite(disc_t=loss_d_t, disc_s=loss_d_s)
    (loss_d_t + loss_d_s).backward()
    state.opt_disc.step()
    state.last_disc = {"disc_s": float(loss_d_s.detach()), "disc_t": float(loss_d_t.detach())}

    # Generator phase: discriminators frozen (no grads computed for them).
    _set_requires_grad(model.disc_s, False)
    _set_requires_grad(model.disc_t, False)
    try:
        state.opt_gen.zero_grad(set_to_none=True)
        fake_t = model.gen_st(batch_s)
        fake_s = model.gen_ts(batch_t)
        rec_s = model.gen_ts(fake_t)
        rec_t = model.gen_st(fake_s)
        gan_st = generator_adv_loss(model.disc_t, fake_t, state.gan_mode)
        gan_ts = generator_adv_loss(model.disc_s, fake_s, state.gan_mode)
        cyc = (rec_s - batch_s).abs().mean() + (rec_t - batch_t).abs().mean()
        check_finite(gan_st=gan_st, gan_ts=gan_ts, cyc=cyc)
        total = gan_st + gan_ts + state.lambda_cyc * cyc
        total.backward()
        state.opt_gen.step()
    finally:
        _set_requires_grad(model.disc_s, True)
        _set_requires_grad(model.disc_t, True)

    return GanLossBreakdown.compose(
        float(gan_st.detach()), float(gan_ts.detach()), float(cyc.detach()), state.lambda_cyc
    )
