"""Pluggable image feature extractors for the generative metrics."""

import numpy as np
import torch
from torch.nn import functional as F

from .._validation import check_stack
from ..errors import InvalidArgumentError
from ..io.prot import read_prot


class IdentityFlatten:
    name = "identity-flatten"
    seed = None

    def __call__(self, images):
        imgs, _ = check_stack(images, "images")
        return imgs.reshape(len(imgs), -1)


class FrozenRandomConv:
    """Frozen random conv pyramid summarised by log channel energies.

    The first layer's filters are zero-mean (edge detectors) and every layer
    uses ``|.|`` without bias, so each channel energy (spatial mean) scales
    linearly with image intensity; logs centred per image cancel that scale.
    The pyramid runs once per quarter-turn of all its kernels. The mean over
    the four passes carries the isotropic part and the spread across them
    measures anisotropy (elongated shapes excite the rotated banks unequally).
    Downsampling is 2x2 average pooling rather than strided convolution, so
    both summaries are exactly unchanged when the input turns a quarter turn.
    """

    name = "frozen-random-conv"
    widths = (16, 32, 64, 64)
    eps = 1e-8

    def __init__(self, seed=0, image_size=None):
        self.seed = seed
        self.image_size = image_size
        gen = torch.Generator().manual_seed(int(seed))
        weights, ch = [], 1
        for k, w in enumerate(self.widths):
            weight = torch.randn(w, ch, 3, 3, generator=gen, dtype=torch.float64) / np.sqrt(9 * ch)
            if k == 0:
                weight = weight - weight.mean((1, 2, 3), keepdim=True)
            weights.append(weight)
            ch = w
        self.weights = weights
        self.banks = [[torch.rot90(w, r, (2, 3)) for w in weights] for r in range(4)]

    @property
    def dim(self):
        return 2 * (1 + sum(self.widths))

    def _log_energies(self, h, weights):
        parts = [h.abs().mean((2, 3))]
        for k, weight in enumerate(weights):
            if k:
                h = F.avg_pool2d(h, 2)
            h = F.conv2d(h, weight, padding=1).abs()
            parts.append(h.mean((2, 3)))
        return torch.log(torch.cat(parts, 1) + self.eps)

    def __call__(self, images):
        imgs, _ = check_stack(images, "images")
        if self.image_size is not None and imgs.shape[1:] != tuple(self.image_size):
            raise InvalidArgumentError(f"extractor expects {tuple(self.image_size)} images, got {imgs.shape[1:]}")
        if min(imgs.shape[1:]) < 2 ** (len(self.widths) - 1):
            raise InvalidArgumentError(f"images of shape {imgs.shape[1:]} are too small for the conv pyramid")
        out = []
        with torch.no_grad():
            for lo in range(0, len(imgs), 128):
                h = torch.from_numpy(imgs[lo:lo + 128])[:, None]
                e = torch.stack([self._log_energies(h, bank) for bank in self.banks])
                iso = e.mean(0)
                out.append(torch.cat([iso - iso.mean(1, keepdim=True), e.std(0, correction=0)], 1).numpy())
        return np.concatenate(out)


class ExternalFeatures:
    """Features computed by an outside tool and stored as an n x d PROT tensor."""

    name = "external"
    seed = None

    def __init__(self, path):
        self.path = str(path)

    def __call__(self, images=None):
        feats = np.asarray(read_prot(self.path), dtype=np.float64)
        if feats.ndim != 2:
            raise InvalidArgumentError(f"external features must be n x d, got shape {feats.shape}")
        if images is not None and len(images) != len(feats):
            raise InvalidArgumentError(f"{len(feats)} feature rows for {len(images)} images")
        return feats


def make_extractor(spec="frozen-random-conv", seed=0, path=None):
    if not isinstance(spec, str):
        return spec
    if spec == "identity-flatten":
        return IdentityFlatten()
    if spec == "frozen-random-conv":
        return FrozenRandomConv(seed)
    if spec == "external":
        if path is None:
            raise InvalidArgumentError("external extractor needs a PROT path")
        return ExternalFeatures(path)
    raise InvalidArgumentError(f"unknown extractor {spec!r}")


def extract_features(images, extractor="frozen-random-conv", seed=0):
    """One feature row per image."""
    return make_extractor(extractor, seed)(images)


def centroid_accuracy(train_x, train_y, test_x, test_y, standardize=False):
    """Accuracy of the nearest-class-mean rule fitted on ``train``.

    With ``standardize`` every feature is first z-scored with the training
    mean and standard deviation, so no single high-variance feature decides.
    """
    train_y, test_y = np.asarray(train_y), np.asarray(test_y)
    if standardize:
        mu, sd = train_x.mean(0), train_x.std(0)
        sd = np.where(sd > 0, sd, 1.0)
        train_x, test_x = (train_x - mu) / sd, (test_x - mu) / sd
    labels = np.unique(train_y)
    centroids = np.stack([train_x[train_y == c].mean(0) for c in labels])
    d = ((test_x[:, None, :] - centroids[None]) ** 2).sum(-1)
    return float(np.mean(labels[d.argmin(1)] == test_y))
