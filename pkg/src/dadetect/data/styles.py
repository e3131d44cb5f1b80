"""Domain style definitions for the synthetic two-domain benchmark.

A :class:`DomainStyleSpec` pins every rendering knob, so one spec plus one
seed fully determines an image. Scenario presets pair a clean source style
with a shifted target style to mimic weather- and camera-induced domain
gaps at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

# Documented knob ranges; construction rejects anything outside them.
KNOB_RANGES = {
    "texture_scale": (2, 64),
    "texture_strength": (0.0, 0.3),
    "color_jitter": (0.0, 0.3),
    "hue_shift": (-0.5, 0.5),
    "brightness": (-0.4, 0.4),
    "contrast": (0.4, 1.6),
    "noise": (0.0, 0.15),
    "fog": (0.0, 0.95),
    "rain": (0.0, 1.0),
}


@dataclass(frozen=True)
class DomainStyleSpec:
    """Rendering knobs for one domain.

    Background is a vertical gradient between two palette colors overlaid
    with coarse value noise; objects take per-class palette colors with
    jitter. The photometric stage then applies hue rotation, brightness,
    contrast, fog alpha-blend, rain streaks and additive noise, in that
    order.
    """

    name: str
    background_base: tuple[float, float, float] = (0.24, 0.27, 0.31)
    background_alt: tuple[float, float, float] = (0.42, 0.45, 0.49)
    object_palette: tuple[tuple[float, float, float], ...] = (
        (0.78, 0.22, 0.20),
        (0.20, 0.35, 0.80),
        (0.85, 0.76, 0.22),
    )
    texture_scale: int = 16
    texture_strength: float = 0.06
    color_jitter: float = 0.06
    hue_shift: float = 0.0
    brightness: float = 0.0
    contrast: float = 1.0
    noise: float = 0.01
    fog: float = 0.0
    rain: float = 0.0
    fog_color: tuple[float, float, float] = (0.76, 0.77, 0.79)

    def __post_init__(self):
        for knob, (lo, hi) in KNOB_RANGES.items():
            value = getattr(self, knob)
            if not lo <= value <= hi:
                raise ValueError(
                    f"style {self.name!r}: {knob}={value} outside [{lo}, {hi}]"
                )
        for color in (
            self.background_base,
            self.background_alt,
            self.fog_color,
            *self.object_palette,
        ):
            if len(color) != 3 or not all(0.0 <= c <= 1.0 for c in color):
                raise ValueError(f"style {self.name!r}: bad color {color}")

    def differs_from(self, other: "DomainStyleSpec") -> bool:
        """True if at least one knob or palette entry differs."""
        ours = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "name"}
        theirs = {f: getattr(other, f) for f in other.__dataclass_fields__ if f != "name"}
        return ours != theirs


CLEAN = DomainStyleSpec(name="clean")

# Heavy gray alpha-blend plus extra sensor noise: the "adverse weather" gap.
FOG = replace(CLEAN, name="fog", fog=0.62, noise=0.025, brightness=0.02)

# Different camera/site: rotated hues, new background palette, softer
# contrast, coarser texture.
COLORSHIFT = replace(
    CLEAN,
    name="colorshift",
    background_base=(0.20, 0.31, 0.22),
    background_alt=(0.38, 0.50, 0.40),
    texture_scale=8,
    hue_shift=0.30,
    brightness=0.08,
    contrast=0.82,
    noise=0.02,
)

SCENARIOS: dict[str, tuple[DomainStyleSpec, DomainStyleSpec]] = {
    "clean2fog": (CLEAN, FOG),
    "clean2colorshift": (CLEAN, COLORSHIFT),
}


def scenario_styles(name: str) -> tuple[DomainStyleSpec, DomainStyleSpec]:
    """Resolve a scenario name to its (source, target) style pair."""
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; available: {sorted(SCENARIOS)}"
        ) from None
