"""Perceptual compression of sinograms into a latent grid and back.

The encoder downsamples by ``f`` in ``log2(f)`` stride-2 stages (residual
blocks at each resolution before its downsample, channels doubling per stage,
one more block at the bottleneck) and the decoder mirrors it with
nearest-neighbour upsampling. Two latent regularisers are
available: a KL term towards a standard normal prior and a vector-quantisation
layer applied in front of the decoder.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from ._validation import check_divisible, check_stack
from .errors import InvalidArgumentError
from .io.checkpoint import Checkpoint, config_hash
from .nn.functional import gaussian
from .nn.layers import Downsample, Norm, ResBlock, Upsample, seeded
from .nn.optim import OptimizerState, optimizer_step
from .nn.params import ParameterStore
from .rng import RngState, as_rng

_VQ_CHUNK = 8192


@dataclass
class AutoencoderConfig:
    downsample_factor: int = 4
    latent_channels: int = 3
    base_channels: int = 16
    num_res_blocks: int = 2
    regularizer: str = "vq"
    codebook_size: int = 256
    commitment_weight: float = 0.25
    kl_weight: float = 1e-6

    def __post_init__(self):
        self.regularizer = self.regularizer.lower()
        if self.downsample_factor not in (2, 4, 8, 16):
            raise InvalidArgumentError("downsample_factor must be a power of two between 2 and 16")
        if self.latent_channels < 1:
            raise InvalidArgumentError("latent_channels must be >= 1")
        if self.regularizer not in ("kl", "vq"):
            raise InvalidArgumentError(f"unknown regularizer {self.regularizer!r}")
        if self.regularizer == "vq" and self.codebook_size < 2:
            raise InvalidArgumentError("codebook_size must be >= 2")

    @property
    def stages(self):
        return int(round(math.log2(self.downsample_factor)))


def vq_quantize(z, codebook, commitment_weight=0.25):
    """Snap each vector of ``z`` (channels on dim 1, or rows of a 2-D tensor) to its nearest code.

    Returns ``(z_q, indices, vq_loss)`` where ``z_q`` carries the straight-through
    gradient to ``z`` and ``vq_loss = mse(sg[z], e) + commitment_weight * mse(z, sg[e])``.
    Ties go to the lower code index.
    """
    if codebook.dim() != 2 or codebook.shape[0] == 0:
        raise InvalidArgumentError("codebook must be a non-empty [K, c] tensor")
    if z.dim() == 2:
        flat = z
    else:
        flat = z.movedim(1, -1).reshape(-1, z.shape[1])
    if flat.shape[1] != codebook.shape[1]:
        raise InvalidArgumentError(f"latent width {flat.shape[1]} != codebook width {codebook.shape[1]}")
    with torch.no_grad():
        idx = torch.empty(flat.shape[0], dtype=torch.long)
        for lo in range(0, flat.shape[0], _VQ_CHUNK):
            block = flat[lo:lo + _VQ_CHUNK]
            # accumulate per channel: avoids the [chunk, K, c] intermediate
            dist = torch.zeros(block.shape[0], codebook.shape[0], dtype=block.dtype)
            for c in range(block.shape[1]):
                dist += (block[:, c, None] - codebook[None, :, c]) ** 2
            idx[lo:lo + _VQ_CHUNK] = torch.argmin(dist, dim=1)
    chosen = codebook[idx]
    loss = ((flat.detach() - chosen) ** 2).mean() + commitment_weight * ((flat - chosen.detach()) ** 2).mean()
    # forward value is exactly the code vector; gradient passes straight through to z
    quant = chosen.detach() + (flat - flat.detach())
    if z.dim() != 2:
        quant = quant.reshape(*z.shape[:1], *z.shape[2:], z.shape[1]).movedim(-1, 1)
        idx = idx.reshape(z.shape[0], *z.shape[2:])
    return quant, idx, loss


def kl_divergence(mean, logvar):
    """Mean over elements of ``0.5 * (mu^2 + exp(logvar) - 1 - logvar)``."""
    if mean.shape != logvar.shape:
        raise InvalidArgumentError("mean and logvar shapes differ")
    return (0.5 * (mean**2 + torch.exp(logvar) - 1.0 - logvar)).mean()


class Encoder(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        ch = cfg.base_channels
        self.conv_in = nn.Conv2d(1, ch, 3, padding=1)
        blocks = []
        for _ in range(cfg.stages):
            blocks.extend(ResBlock(ch) for _ in range(cfg.num_res_blocks))
            blocks.append(Downsample(ch, 2 * ch))
            ch *= 2
        blocks.append(ResBlock(ch))
        self.blocks = nn.ModuleList(blocks)
        self.norm_out = Norm(ch)
        out = 2 * cfg.latent_channels if cfg.regularizer == "kl" else cfg.latent_channels
        self.conv_out = nn.Conv2d(ch, out, 3, padding=1)

    def forward(self, x):
        h = self.conv_in(x)
        for block in self.blocks:
            h = block(h)
        return self.conv_out(torch.nn.functional.silu(self.norm_out(h)))


class Decoder(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        ch = cfg.base_channels * 2**cfg.stages
        self.conv_in = nn.Conv2d(cfg.latent_channels, ch, 3, padding=1)
        blocks = [ResBlock(ch)]
        for _ in range(cfg.stages):
            blocks.append(Upsample(ch, ch // 2))
            ch //= 2
            blocks.extend(ResBlock(ch) for _ in range(cfg.num_res_blocks))
        self.blocks = nn.ModuleList(blocks)
        self.norm_out = Norm(ch)
        self.conv_out = nn.Conv2d(ch, 1, 3, padding=1)

    def forward(self, z):
        h = self.conv_in(z)
        for block in self.blocks:
            h = block(h)
        return self.conv_out(torch.nn.functional.silu(self.norm_out(h)))


class AutoencoderNet(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = Decoder(cfg)
        if cfg.regularizer == "vq":
            self.codebook = nn.Parameter(torch.randn(cfg.codebook_size, cfg.latent_channels) * 0.1)

    def encode(self, x):
        """Deterministic encoder output; KL variant returns ``(mean, logvar)``."""
        h = self.encoder(x)
        if self.cfg.regularizer == "kl":
            mean, logvar = h.chunk(2, dim=1)
            return mean, logvar.clamp(-30.0, 20.0)
        return h

    def decode(self, z):
        if self.cfg.regularizer == "vq":
            z, _, _ = vq_quantize(z, self.codebook, self.cfg.commitment_weight)
        return self.decoder(z)


def _to_nchw(x, dtype):
    return torch.from_numpy(np.ascontiguousarray(x)).to(dtype)[:, None]


class SinogramAutoencoder(TransformerMixin, BaseEstimator):
    """Sinogram <-> latent transformer.

    ``transform`` returns latents shaped ``(n, H/f, W/f, c)`` (the KL variant
    returns the posterior mean); ``inverse_transform`` decodes them back to
    sinograms, quantising first in the VQ variant.
    """

    def __init__(self, downsample_factor=4, latent_channels=3, base_channels=16, num_res_blocks=2,
                 regularizer="vq", codebook_size=256, commitment_weight=0.25, kl_weight=1e-6,
                 epochs=30, batch_size=16, lr=2e-3, seed=0, dtype="float32", verbose=False):
        self.downsample_factor = downsample_factor
        self.latent_channels = latent_channels
        self.base_channels = base_channels
        self.num_res_blocks = num_res_blocks
        self.regularizer = regularizer
        self.codebook_size = codebook_size
        self.commitment_weight = commitment_weight
        self.kl_weight = kl_weight
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.dtype = dtype
        self.verbose = verbose

    # -- construction -------------------------------------------------
    def config(self):
        return AutoencoderConfig(self.downsample_factor, self.latent_channels, self.base_channels,
                                 self.num_res_blocks, self.regularizer, self.codebook_size,
                                 self.commitment_weight, self.kl_weight)

    @property
    def _torch_dtype(self):
        return getattr(torch, self.dtype)

    def _init_model(self, rng):
        self.config_ = self.config()
        with seeded(rng):
            self.model_ = AutoencoderNet(self.config_).to(self._torch_dtype)
        self.params_ = ParameterStore.from_module(self.model_)

    def _check_input(self, X):
        sinos, single = check_stack(X, "sinograms")
        check_divisible(sinos.shape[1:], self.downsample_factor, "sinogram")
        return sinos, single

    # -- training -----------------------------------------------------
    def fit(self, X, y=None):
        sinos, _ = self._check_input(X)
        if sinos.shape[0] < 2:
            raise InvalidArgumentError("autoencoder training needs at least 2 sinograms")
        rng = RngState(self.seed, stream=1)
        self._init_model(rng)
        self._train_rng = RngState(self.seed, stream=2)
        self.scale_ = float(np.max(np.abs(sinos))) or 1.0
        self.input_shape_ = tuple(sinos.shape[1:])
        data = _to_nchw(sinos / self.scale_, self._torch_dtype)
        self.loss_history_ = []
        if self.epochs <= 0:
            return self

        cfg = self.config_
        if cfg.regularizer == "vq":
            self._init_codebook(data, rng)
        opt = OptimizerState("adam", lr=self.lr)
        n = data.shape[0]
        batches = math.ceil(n / self.batch_size)
        total = self.epochs * batches
        step = 0
        self.model_.train()
        for epoch in range(self.epochs):
            order = rng.generator().permutation(n)
            running = 0.0
            for b in range(batches):
                opt.lr = _cosine_lr(self.lr, step, total)
                batch = data[order[b * self.batch_size:(b + 1) * self.batch_size]]
                loss = self._loss(batch)
                loss.backward()
                optimizer_step(self.params_, opt)
                running += loss.item() * batch.shape[0]
                step += 1
            self.loss_history_.append(running / n)
            if self.verbose:
                print(f"autoencoder epoch {epoch + 1}/{self.epochs} loss {self.loss_history_[-1]:.6f}")
        self.model_.eval()
        return self

    def _init_codebook(self, data, rng):
        with torch.no_grad():
            probe = data[: min(64, data.shape[0])]
            z = self.model_.encode(probe)
            vecs = z.movedim(1, -1).reshape(-1, z.shape[1])
            pick = rng.generator().choice(vecs.shape[0], size=self.config_.codebook_size,
                                          replace=vecs.shape[0] < self.config_.codebook_size)
            self.model_.codebook.copy_(vecs[torch.from_numpy(pick)])

    def _loss(self, batch):
        cfg = self.config_
        if cfg.regularizer == "kl":
            mean, logvar = self.model_.encode(batch)
            noise = gaussian(self._train_rng, mean.shape, mean.dtype)
            z = mean + torch.exp(0.5 * logvar) * noise
            recon = self.model_.decoder(z)
            return ((recon - batch) ** 2).mean() + cfg.kl_weight * kl_divergence(mean, logvar)
        z = self.model_.encode(batch)
        zq, _, vq_loss = vq_quantize(z, self.model_.codebook, cfg.commitment_weight)
        recon = self.model_.decoder(zq)
        return ((recon - batch) ** 2).mean() + vq_loss

    # -- inference ----------------------------------------------------
    def encode_distribution(self, X):
        """Posterior ``(mean, logvar)`` of the KL variant, as ``(n, h, w, c)`` arrays."""
        check_is_fitted(self, "model_")
        if self.config_.regularizer != "kl":
            raise InvalidArgumentError("encode_distribution needs the KL regulariser")
        sinos, single = self._check_input(X)
        with torch.no_grad():
            mean, logvar = self.model_.encode(_to_nchw(sinos / self.scale_, self._torch_dtype))
        out = tuple(t.movedim(1, -1).numpy().astype(np.float64) for t in (mean, logvar))
        return tuple(o[0] for o in out) if single else out

    def transform(self, X):
        check_is_fitted(self, "model_")
        sinos, single = self._check_input(X)
        chunks = []
        with torch.no_grad():
            for lo in range(0, sinos.shape[0], 64):
                z = self.model_.encode(_to_nchw(sinos[lo:lo + 64] / self.scale_, self._torch_dtype))
                if isinstance(z, tuple):
                    z = z[0]
                chunks.append(z.movedim(1, -1).numpy().astype(np.float64))
        z = np.concatenate(chunks)
        return z[0] if single else z

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        z = np.asarray(Z, dtype=np.float64)
        single = z.ndim == 3
        if single:
            z = z[None]
        f = self.downsample_factor
        if z.ndim != 4 or z.shape[-1] != self.latent_channels:
            raise InvalidArgumentError(f"latents must be (n, h, w, {self.latent_channels}), got {z.shape}")
        if tuple(z.shape[1:3]) != (self.input_shape_[0] // f, self.input_shape_[1] // f):
            raise InvalidArgumentError(f"latent grid {z.shape[1:3]} does not match sinogram shape {self.input_shape_}")
        chunks = []
        with torch.no_grad():
            for lo in range(0, z.shape[0], 64):
                zt = torch.from_numpy(np.ascontiguousarray(z[lo:lo + 64])).to(self._torch_dtype).movedim(-1, 1)
                chunks.append(self.model_.decode(zt)[:, 0].numpy().astype(np.float64))
        out = np.concatenate(chunks) * self.scale_
        return out[0] if single else out

    def latent_shape(self, sinogram_shape=None):
        shape = sinogram_shape or self.input_shape_
        f = self.downsample_factor
        return (shape[0] // f, shape[1] // f, self.latent_channels)

    # -- persistence --------------------------------------------------
    def to_checkpoint(self):
        check_is_fitted(self, "model_")
        config = {"estimator": self.get_params(), "scale": self.scale_, "input_shape": list(self.input_shape_)}
        config["hash"] = config_hash({k: v for k, v in config.items() if k != "hash"})
        tensors = self.params_.to_numpy()
        return Checkpoint("autoencoder", config, tensors, seed=self.seed)

    @classmethod
    def from_checkpoint(cls, ckpt):
        est = cls(**ckpt.config["estimator"])
        est._init_model(RngState(est.seed, stream=1))
        est.params_.load_numpy(ckpt.tensors)
        est.scale_ = float(ckpt.config["scale"])
        est.input_shape_ = tuple(ckpt.config["input_shape"])
        est.loss_history_ = []
        est.model_.eval()
        return est


def _cosine_lr(base, step, total, floor=0.05):
    if total <= 1:
        return base
    frac = step / (total - 1)
    return base * (floor + (1 - floor) * 0.5 * (1 + math.cos(math.pi * frac)))


def encode(x, model):
    """Functional form of :meth:`SinogramAutoencoder.transform`."""
    return model.transform(x)


def decode(z, model):
    return model.inverse_transform(z)


def train_autoencoder(sinograms, config=None, rng=0, epochs=30, **kwargs):
    """Fit a :class:`SinogramAutoencoder` and return its checkpoint."""
    params = asdict(config) if config is not None else {}
    est = SinogramAutoencoder(**params, epochs=epochs, seed=as_rng(rng).seed, **kwargs)
    if len(sinograms) == 0:
        raise InvalidArgumentError("empty sinogram dataset")
    est.fit(sinograms)
    return est.to_checkpoint(), est
