from .model import Denoiser, DenoiserConfig, ModelOutput, mean_from_eps
from .sampling import ddim_step, ddpm_step
from .schedule import NoiseSchedule, forward_diffuse, make_schedule
from .train import DiffusionTrainConfig, train_conditional, train_unconditional
from .unet import UNet

__all__ = [
    "Denoiser", "DenoiserConfig", "ModelOutput", "mean_from_eps",
    "ddim_step", "ddpm_step", "NoiseSchedule", "forward_diffuse", "make_schedule",
    "DiffusionTrainConfig", "train_conditional", "train_unconditional", "UNet",
]
