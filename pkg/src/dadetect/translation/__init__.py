from .losses import (
    GanLossBreakdown,
    TrainingDivergedError,
    cycle_loss,
    discriminator_loss,
    gan_loss,
    generator_adv_loss,
)
from .networks import (
    DIRECTIONS,
    PatchDiscriminator,
    TranslationArch,
    TranslationModel,
    UNetGenerator,
    translate,
)
from .train import PdaState, lr_schedule_pda, make_pda_state, pda_train_step, set_lr

__all__ = [
    "DIRECTIONS",
    "GanLossBreakdown",
    "PatchDiscriminator",
    "PdaState",
    "TrainingDivergedError",
    "TranslationArch",
    "TranslationModel",
    "UNetGenerator",
    "cycle_loss",
    "discriminator_loss",
    "gan_loss",
    "generator_adv_loss",
    "lr_schedule_pda",
    "make_pda_state",
    "pda_train_step",
    "set_lr",
    "translate",
]
