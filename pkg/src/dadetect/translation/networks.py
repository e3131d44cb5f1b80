"""Generator and discriminator networks for the image translation stage.

Generators are U-Nets with skip connections and instance normalization,
mapping [-1,1] images to [-1,1] via a final tanh. Discriminators are
patch-level: a small strided conv stack emitting one real/fake logit per
local patch (receptive field 34 px at the default config).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class TranslationArch:
    gen_base: int = 16
    gen_depth: int = 4
    disc_base: int = 32


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """Gaussian init for conv layers, the image-GAN convention."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _down(in_ch: int, out_ch: int, normalize: bool = True) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv2d(in_ch, out_ch, 4, stride=2, padding=1)]
    if normalize:
        layers.append(nn.InstanceNorm2d(out_ch))
    layers.append(nn.LeakyReLU(0.2, inplace=True))
    return nn.Sequential(*layers)


def _up(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(in_ch, out_ch, 4, stride=2, padding=1),
        nn.InstanceNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class UNetGenerator(nn.Module):
    """Encoder-decoder with skip connections; input dims must divide 2^depth."""

    def __init__(self, base: int = 16, depth: int = 4, channels: int = 3):
        super().__init__()
        self.depth = depth
        widths = [base * 2**i for i in range(depth)]
        self.downs = nn.ModuleList()
        in_ch = channels
        for i, w in enumerate(widths):
            self.downs.append(_down(in_ch, w, normalize=i > 0))
            in_ch = w
        self.ups = nn.ModuleList()
        rev = widths[::-1]
        for i in range(depth - 1):
            in_w = rev[i] if i == 0 else rev[i] * 2
            self.ups.append(_up(in_w, rev[i + 1]))
        self.ups.append(_up(rev[-1] * 2, base))
        self.head = nn.Sequential(nn.Conv2d(base, channels, 3, padding=1), nn.Tanh())
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        div = 2**self.depth
        if x.shape[-1] % div or x.shape[-2] % div:
            raise ValueError(
                f"input dims {tuple(x.shape[-2:])} must be divisible by "
                f"{div} (2^depth for {self.depth} downsampling levels)"
            )
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
        y = skips[-1]
        for i, up in enumerate(self.ups):
            y = up(y if i == 0 else torch.cat([y, skips[-1 - i]], dim=1))
        return self.head(y)


class PatchDiscriminator(nn.Module):
    """Conv stack scoring overlapping patches; returns raw logits (B,1,h,w)."""

    def __init__(self, base: int = 32, channels: int = 3):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(channels, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, base * 2, 4, stride=2, padding=1),
            nn.InstanceNorm2d(base * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 2, base * 4, 3, stride=2, padding=1),
            nn.InstanceNorm2d(base * 4),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base * 4, 1, 3, stride=1, padding=1),
        )
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class TranslationModel(nn.Module):
    """The four-network bundle: two symmetric generators, two discriminators.

    ``gen_st`` maps source-style to target-style images, ``gen_ts`` the
    reverse; ``disc_t`` judges target-style images (real target vs
    generated), ``disc_s`` source-style ones.
    """

    def __init__(self, arch: TranslationArch = TranslationArch()):
        super().__init__()
        self.arch = arch
        self.gen_st = UNetGenerator(arch.gen_base, arch.gen_depth)
        self.gen_ts = UNetGenerator(arch.gen_base, arch.gen_depth)
        self.disc_s = PatchDiscriminator(arch.disc_base)
        self.disc_t = PatchDiscriminator(arch.disc_base)

    def generator_parameters(self):
        yield from self.gen_st.parameters()
        yield from self.gen_ts.parameters()

    def discriminator_parameters(self):
        yield from self.disc_s.parameters()
        yield from self.disc_t.parameters()


DIRECTIONS = ("s2t", "t2s")


def translate(model: TranslationModel, image: torch.Tensor, direction: str) -> torch.Tensor:
    """Map a [-1,1] image batch across domains; deterministic in eval mode."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    gen = model.gen_st if direction == "s2t" else model.gen_ts
    was_training = gen.training
    gen.eval()
    try:
        with torch.no_grad():
            out = gen(image)
    finally:
        gen.train(was_training)
    return out
