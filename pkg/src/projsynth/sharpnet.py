"""Image-domain refinement of FBP reconstructions.

A small residual U-Net is trained on synthetic pairs (clean image plus
Gaussian noise) with an MSE term and a multi-scale perceptual term measured
by a frozen convolutional feature pyramid.
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
from .nn.layers import Downsample, ResBlock, Upsample, seeded, zero_module
from .nn.optim import OptimizerState, optimizer_step
from .nn.params import ParameterStore
from .rng import RngState, as_rng, gaussian_sample


@dataclass
class SharpNetConfig:
    base_channels: int = 16
    depth: int = 2
    lambda1: float = 0.1
    lambda2: float = 1.0
    noise_sigma: float = 0.1
    scales: int = 3
    feature_seed: int = 1234

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidArgumentError("loss weights must be non-negative")
        if self.noise_sigma <= 0:
            raise InvalidArgumentError("noise_sigma must be positive")
        if not 1 <= self.scales <= 4:
            raise InvalidArgumentError("scales must lie in [1, 4]")
        if self.depth < 1:
            raise InvalidArgumentError("depth must be >= 1")


class FeatureNet(nn.Module):
    """Frozen, randomly initialised 4-layer conv pyramid; returns one feature map per scale."""

    widths = (8, 16, 32, 32)

    def __init__(self, seed=1234):
        super().__init__()
        self.seed = seed
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            layers, ch = [], 1
            for k, w in enumerate(self.widths):
                layers.append(nn.Conv2d(ch, w, 3, stride=1 if k == 0 else 2, padding=1))
                ch = w
        self.layers = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x, scales=4):
        feats, h = [], x
        for layer in self.layers[:scales]:
            h = torch.relu(layer(h))
            feats.append(h)
        return feats


class SharpNetModel(nn.Module):
    def __init__(self, base_channels=16, depth=2):
        super().__init__()
        ch = base_channels
        self.conv_in = nn.Conv2d(1, ch, 3, padding=1)
        self.down_res = nn.ModuleList()
        self.downs = nn.ModuleList()
        skips = []
        for _ in range(depth):
            self.down_res.append(ResBlock(ch, ch))
            skips.append(ch)
            self.downs.append(Downsample(ch, 2 * ch))
            ch *= 2
        self.mid = ResBlock(ch, ch)
        self.ups = nn.ModuleList()
        self.up_res = nn.ModuleList()
        for _ in range(depth):
            self.ups.append(Upsample(ch, ch // 2))
            ch //= 2
            self.up_res.append(ResBlock(ch + skips.pop(), ch))
        self.conv_out = zero_module(nn.Conv2d(ch, 1, 3, padding=1))

    def correction(self, x):
        h = self.conv_in(x)
        hs = []
        for res, down in zip(self.down_res, self.downs):
            h = res(h)
            hs.append(h)
            h = down(h)
        h = self.mid(h)
        for up, res in zip(self.ups, self.up_res):
            h = res(torch.cat([up(h), hs.pop()], dim=1))
        return self.conv_out(h)

    def forward(self, x):
        return x + self.correction(x)


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.from_numpy(np.asarray(x, dtype=np.float64))


def mse_loss(pred, target):
    """Mean squared elementwise difference (returns a tensor when given tensors)."""
    as_float = not isinstance(pred, torch.Tensor)
    p, t = _as_tensor(pred), _as_tensor(target)
    if p.shape != t.shape:
        raise InvalidArgumentError(f"shape mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
    out = ((p - t) ** 2).mean()
    return float(out) if as_float else out


def _nchw(x):
    return x if x.dim() == 4 else x.reshape(-1, 1, *x.shape[-2:])


def multi_scale_perceptual_loss(pred, target, phi, scales):
    """Average over ``scales`` of the mean squared feature difference under ``phi``.

    ``phi(x, scales)`` returns a list of feature maps, one per scale.
    """
    as_float = not isinstance(pred, torch.Tensor)
    p, t = _as_tensor(pred), _as_tensor(target)
    if p.shape != t.shape:
        raise InvalidArgumentError(f"shape mismatch: {tuple(p.shape)} vs {tuple(t.shape)}")
    if isinstance(phi, nn.Module):
        dtype = next(phi.parameters()).dtype
        p, t = p.to(dtype), t.to(dtype)
    fp, ft = phi(_nchw(p), scales), phi(_nchw(t), scales)
    out = sum(((a - b) ** 2).mean() for a, b in zip(fp[:scales], ft[:scales])) / scales
    return float(out) if as_float else out


def sharpnet_total_loss(pred, target, phi, cfg):
    """``mse + lambda1 * perceptual``."""
    total = mse_loss(pred, target)
    if cfg.lambda1:
        total = total + cfg.lambda1 * multi_scale_perceptual_loss(pred, target, phi, cfg.scales)
    return total


def make_training_pair(clean, sigma, rng):
    """``(clean + sigma * noise, clean)`` with noise from the explicit stream."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    clean = np.asarray(clean, dtype=np.float64)
    return clean + sigma * gaussian_sample(rng, clean.shape), clean


class SharpNet(TransformerMixin, BaseEstimator):
    """Residual U-Net refiner. ``fit`` takes clean images; ``transform`` refines coarse ones."""

    def __init__(self, base_channels=16, depth=2, lambda1=0.1, lambda2=1.0, noise_sigma=0.1, scales=3,
                 feature_seed=1234, epochs=30, batch_size=16, lr=1e-3, seed=0, verbose=False):
        self.base_channels = base_channels
        self.depth = depth
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.noise_sigma = noise_sigma
        self.scales = scales
        self.feature_seed = feature_seed
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.verbose = verbose

    def config(self):
        return SharpNetConfig(self.base_channels, self.depth, self.lambda1, self.lambda2, self.noise_sigma,
                              self.scales, self.feature_seed)

    def _init_model(self):
        self.config_ = self.config()
        with seeded(RngState(self.seed, stream=21)):
            self.model_ = SharpNetModel(self.base_channels, self.depth)
        self.features_ = FeatureNet(self.feature_seed)
        self.params_ = ParameterStore.from_module(self.model_)

    def _check(self, X):
        imgs, single = check_stack(X, "images")
        check_divisible(imgs.shape[1:], 2**self.depth, "image")
        return imgs, single

    def fit(self, X, y=None):
        clean, _ = self._check(X)
        if clean.shape[0] < 2:
            raise InvalidArgumentError("SharpNet training needs at least 2 images")
        self._init_model()
        self.loss_history_ = []
        rng = RngState(self.seed, stream=22)
        opt = OptimizerState("adam", lr=self.lr)
        n = clean.shape[0]
        batches = math.ceil(n / self.batch_size)
        cfg = self.config_
        for epoch in range(self.epochs):
            epoch_rng = rng.child(epoch)
            order = epoch_rng.generator().permutation(n)
            running = 0.0
            for b in range(batches):
                idx = order[b * self.batch_size:(b + 1) * self.batch_size]
                pairs = [make_training_pair(clean[i], self.noise_sigma, epoch_rng.child(int(i))) for i in idx]
                noisy = torch.from_numpy(np.stack([p[0] for p in pairs])).float()[:, None]
                target = torch.from_numpy(np.stack([p[1] for p in pairs])).float()[:, None]
                loss = sharpnet_total_loss(self.model_(noisy), target, self.features_, cfg)
                loss.backward()
                optimizer_step(self.params_, opt)
                running += loss.item() * len(idx)
            self.loss_history_.append(running / n)
            if self.verbose:
                print(f"sharpnet epoch {epoch + 1}/{self.epochs} loss {self.loss_history_[-1]:.6f}")
        if self.epochs <= 0:
            self.params_.zero_grad()
        return self

    def transform(self, X):
        """Refined images; exactly the input while the output layer is zero."""
        if not hasattr(self, "model_"):
            self._init_model()
        imgs, single = self._check(X)
        out = np.empty_like(imgs)
        with torch.no_grad():
            for lo in range(0, imgs.shape[0], 64):
                x = torch.from_numpy(imgs[lo:lo + 64]).float()[:, None]
                out[lo:lo + 64] = imgs[lo:lo + 64] + self.model_.correction(x)[:, 0].double().numpy()
        return out[0] if single else out

    def to_checkpoint(self):
        check_is_fitted(self, "model_")
        config = {"estimator": self.get_params()}
        config["hash"] = config_hash(config)
        tensors = dict(self.params_.to_numpy())
        for name, p in self.features_.named_parameters():
            tensors["features." + name] = p.detach().numpy().copy()
        return Checkpoint("sharpnet", config, tensors, seed=self.seed)

    @classmethod
    def from_checkpoint(cls, ckpt):
        est = cls(**ckpt.config["estimator"])
        est._init_model()
        est.params_.load_numpy({k: v for k, v in ckpt.tensors.items() if not k.startswith("features.")})
        with torch.no_grad():
            for name, p in est.features_.named_parameters():
                p.copy_(torch.from_numpy(ckpt.tensors["features." + name]))
        est.loss_history_ = []
        return est


def sharpnet_forward(model, coarse):
    return model.transform(coarse)


def train_sharpnet(images, config=None, rng=0, epochs=30, **kwargs):
    params = asdict(config) if config is not None else {}
    est = SharpNet(**params, epochs=epochs, seed=as_rng(rng).seed, **kwargs)
    if len(images) == 0:
        raise InvalidArgumentError("empty image set")
    est.fit(images)
    return est.to_checkpoint(), est
