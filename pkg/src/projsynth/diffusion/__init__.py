from .ddpm import (ddim_sigma, ddim_step, ddpm_perturb, diffusion_loss, draw_training_noise, forward_chain, sample,
                   timestep_sequence)
from .model import LatentDiffusion
from .schedules import NoiseSchedule, VESchedule, make_schedule
from .sde import pc_sample, score_matching_loss, ve_perturb
from .unet import ConditionalUNet

__all__ = [
    "ConditionalUNet", "LatentDiffusion", "NoiseSchedule", "VESchedule", "ddim_sigma", "ddim_step", "ddpm_perturb",
    "diffusion_loss", "draw_training_noise", "forward_chain", "make_schedule", "pc_sample", "sample",
    "score_matching_loss", "timestep_sequence", "ve_perturb",
]
