"""DDPM schedules, processes, and denoiser networks."""

from .schedule import DiffusionSchedule, make_schedule
from .ddpm import (Condition, approx_x0, diffusion_train_step, lambda_geo,
                   q_sample, reverse_step, sample_sequence)
from .unet import DenoiserBase, DenoiserUNet1D, DenoiserUNet2D, sinusoidal_embedding

__all__ = [
    "DiffusionSchedule", "make_schedule",
    "Condition", "approx_x0", "diffusion_train_step", "lambda_geo",
    "q_sample", "reverse_step", "sample_sequence",
    "DenoiserBase", "DenoiserUNet1D", "DenoiserUNet2D", "sinusoidal_embedding",
]
