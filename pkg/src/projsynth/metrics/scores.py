"""FID, Inception Score and KID over feature / probability matrices."""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..errors import InvalidArgumentError
from ..rng import as_rng
from .linalg import trace_sqrt_product

log = logging.getLogger(__name__)


def _features(x, name, min_rows=1):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidArgumentError(f"{name} must be an n x d matrix, got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise InvalidArgumentError(f"{name} needs at least {min_rows} rows, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return x


def _pair(real, gen, min_rows):
    real = _features(real, "real", min_rows)
    gen = _features(gen, "gen", min_rows)
    if real.shape[1] != gen.shape[1]:
        raise InvalidArgumentError(f"feature dimension mismatch: {real.shape[1]} vs {gen.shape[1]}")
    return real, gen


def fid(real, gen):
    """Frechet distance between Gaussians fitted with sample means and unbiased covariances."""
    real, gen = _pair(real, gen, 2)
    mu_r, mu_g = real.mean(0), gen.mean(0)
    cov_r = np.atleast_2d(np.cov(real, rowvar=False))
    cov_g = np.atleast_2d(np.cov(gen, rowvar=False))
    mean_term = float(np.sum((mu_r - mu_g) ** 2))
    value = mean_term + float(np.trace(cov_r) + np.trace(cov_g)) - 2.0 * trace_sqrt_product(cov_r, cov_g)
    if value < 0:
        scale = max(1.0, float(np.trace(cov_r) + np.trace(cov_g)))
        if value < -1e-6 * scale:
            raise InvalidArgumentError(f"FID evaluated to {value:.3e}, beyond rounding tolerance")
        log.info("clamping FID %.3e to 0", value)
        value = 0.0
    return value


def _check_probs(probs):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1:
        raise InvalidArgumentError(f"probabilities must be an n x K matrix, got {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or np.any(np.abs(p.sum(1) - 1.0) > 1e-6):
        raise InvalidArgumentError("every probability row must be nonnegative and sum to 1")
    return p


def _entropy(p, axis=-1):
    logp = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logp, axis=axis)


def inception_score(probs):
    """``exp(H(p(y)) - mean_x H(p(y|x)))`` in natural log."""
    p = _check_probs(probs)
    return float(math.exp(_entropy(p.mean(0)) - _entropy(p).mean()))


def inception_score_splits(probs, splits=10):
    """Mean and std of the score over ``splits`` contiguous chunks."""
    p = _check_probs(probs)
    splits = min(splits, p.shape[0])
    scores = [inception_score(chunk) for chunk in np.array_split(p, splits)]
    return float(np.mean(scores)), float(np.std(scores))


class KernelKind(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"


@dataclass(frozen=True)
class Kernel:
    kind: KernelKind = KernelKind.POLYNOMIAL
    degree: int = 3
    gamma: float | None = None
    coef0: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.degree < 1 or self.bandwidth <= 0 or (self.gamma is not None and self.gamma <= 0):
            raise InvalidArgumentError("kernel parameters must be positive")

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, Kernel):
            return spec
        try:
            return cls(KernelKind(str(spec).lower()))
        except ValueError:
            raise InvalidArgumentError(f"unknown kernel {spec!r}") from None

    def __call__(self, x, y):
        dots = x @ y.T
        if self.kind is KernelKind.LINEAR:
            return dots
        if self.kind is KernelKind.POLYNOMIAL:
            gamma = self.gamma if self.gamma is not None else 1.0 / x.shape[1]
            return (gamma * dots + self.coef0) ** self.degree
        sq = np.sum(x**2, 1)[:, None] + np.sum(y**2, 1)[None, :] - 2 * dots
        return np.exp(-np.maximum(sq, 0.0) / (2 * self.bandwidth**2))

    def describe(self):
        if self.kind is KernelKind.POLYNOMIAL:
            g = "1/d" if self.gamma is None else self.gamma
            return f"polynomial(degree={self.degree}, gamma={g}, coef0={self.coef0})"
        if self.kind is KernelKind.RBF:
            return f"rbf(bandwidth={self.bandwidth})"
        return "linear"


def _diag_kernel(kernel, x):
    return np.array([kernel(row[None], row[None])[0, 0] for row in x]) if len(x) else np.zeros(0)


def kid_statistic(real, gen, kernel="polynomial"):
    """Kernel distance with diagonal-only self terms:
    ``mean_i k(g_i, g_i) + mean_i k(r_i, r_i) - 2 mean_ij k(g_i, r_j)``.
    """
    kernel = Kernel.parse(kernel)
    real, gen = _pair(real, gen, 1)
    cross = kernel(gen, real)
    return float(_diag_kernel(kernel, gen).mean() + _diag_kernel(kernel, real).mean() - 2.0 * cross.mean())


def mmd2_unbiased(real, gen, kernel="polynomial"):
    """Conventional unbiased MMD^2 (off-diagonal self terms)."""
    kernel = Kernel.parse(kernel)
    real, gen = _pair(real, gen, 2)
    m, n = len(gen), len(real)
    kgg, krr = kernel(gen, gen), kernel(real, real)
    self_g = (kgg.sum() - np.trace(kgg)) / (m * (m - 1))
    self_r = (krr.sum() - np.trace(krr)) / (n * (n - 1))
    return float(self_g + self_r - 2.0 * kernel(gen, real).mean())


def kid(real, gen, kernel="polynomial", subset_size=None, subsets=10, rng=0, standard_mmd=False):
    """KID. Without ``subset_size`` returns a float; otherwise ``(mean, std)`` over random subsets."""
    stat = mmd2_unbiased if standard_mmd else kid_statistic
    real, gen = _pair(real, gen, 1)
    if subset_size is None:
        return stat(real, gen, kernel)
    if subset_size < (2 if standard_mmd else 1) or subsets < 1:
        raise InvalidArgumentError("subset_size and subsets must be positive")
    size = min(subset_size, len(real), len(gen))
    rng = as_rng(rng)
    values = []
    for b in range(subsets):
        g = rng.child(b).generator()
        ri = g.choice(len(real), size, replace=False)
        gi = g.choice(len(gen), size, replace=False)
        values.append(stat(real[ri], gen[gi], kernel))
    return float(np.mean(values)), float(np.std(values))
