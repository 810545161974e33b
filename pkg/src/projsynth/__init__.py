"""Prompt-conditioned synthesis of CT projection data.

Sinograms are compressed by an autoencoder, generated by a prompt-conditioned
latent diffusion model, reconstructed by fan-beam FBP and refined in the image
domain by SharpNet.
"""

from .autoencoder import SinogramAutoencoder
from .ct import FanBeamGeometry, FanBeamProjector, FBPReconstructor, fbp_reconstruct, forward_project
from .diffusion import LatentDiffusion
from .errors import (ConfigurationError, FormatError, IncompatibleCheckpointError, InvalidArgumentError,
                     PreconditionError, ProjSynthError, UnknownPromptError)
from .phantoms import PhantomSpec, generate_phantoms
from .pipeline import RunConfig
from .prompts import PromptRegistry
from .rng import RngState
from .sharpnet import SharpNet

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "FBPReconstructor", "FanBeamGeometry", "FanBeamProjector", "FormatError",
    "IncompatibleCheckpointError", "InvalidArgumentError", "LatentDiffusion", "PhantomSpec", "PreconditionError",
    "ProjSynthError", "PromptRegistry", "RngState", "RunConfig", "SharpNet", "SinogramAutoencoder",
    "UnknownPromptError", "fbp_reconstruct", "forward_project", "generate_phantoms",
]
