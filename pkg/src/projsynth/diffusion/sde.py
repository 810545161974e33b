"""Variance-exploding SDE: denoising score matching and predictor-corrector sampling."""

import numpy as np

from ..errors import InvalidArgumentError
from ..rng import gaussian_sample


def ve_perturb(x0, t, ve, rng=None, eps=None):
    """Return ``(x_t, target_score)`` with ``x_t = x0 + sigma(t) eps``.

    ``target_score = -(x_t - x0) / sigma(t)^2`` is the score of the Gaussian
    perturbation kernel centred at ``x0``. ``eps`` may be supplied to force a draw.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise InvalidArgumentError("t must lie in [0, 1]")
    x0 = np.asarray(x0, dtype=np.float64)
    if eps is None:
        eps = gaussian_sample(rng, x0.shape)
    sigma = _expand(ve.sigma(t), x0.ndim)
    xt = x0 + sigma * eps
    return xt, -(xt - x0) / sigma**2


def _expand(values, ndim):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def score_matching_loss(score_net, x0, ve, rng):
    """Weighted denoising score matching with ``lambda(t) = sigma(t)^2``.

    Times are uniform on ``(0, 1]`` per item; the result is the batch mean of
    ``lambda(t) * ||S(x_t, t) - target||^2`` (summed over each item's entries).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[0] == 0:
        raise InvalidArgumentError("empty batch")
    gen = rng.generator()
    t = 1.0 - gen.uniform(0.0, 1.0, size=x0.shape[0])  # (0, 1]
    eps = gen.standard_normal(x0.shape)
    xt, target = ve_perturb(x0, t, ve, eps=eps)
    pred = np.asarray(score_net(xt, t), dtype=np.float64)
    sq = ((pred - target) ** 2).reshape(x0.shape[0], -1).sum(axis=1)
    return float(np.mean(ve.sigma(t) ** 2 * sq))


def pc_sample(score_fn, ve, N=None, corrector_steps=1, snr=0.16, rng=None, shape=(1,)):
    """Reverse-time VE-SDE sampler: Euler-Maruyama predictor plus Langevin corrector.

    ``score_fn(x, t)`` takes a batch ``x`` of ``shape`` and a scalar time. The
    first axis of ``shape`` is the batch. The corrector step size comes from
    the batch-averaged gradient and noise norms; per-item norms make it blow
    up for low-dimensional items sitting near a mode. Starts from ``N(0, sigma_max^2 I)`` and returns the sample at ``t = 0``.
    """
    N = ve.N if N is None else int(N)
    if N < 1:
        raise InvalidArgumentError("N must be >= 1")
    if snr <= 0:
        raise InvalidArgumentError("snr must be positive")
    ts = np.arange(N + 1) / N
    sig2 = ve.sigma(ts) ** 2
    x = ve.sigma_max * gaussian_sample(rng, shape)
    batch = shape[0]
    for i in range(N, 0, -1):
        var_step = sig2[i] - sig2[i - 1]
        x = x + var_step * score_fn(x, ts[i]) + np.sqrt(var_step) * gaussian_sample(rng, shape)
        for _ in range(corrector_steps):
            grad = score_fn(x, ts[i - 1])
            noise = gaussian_sample(rng, shape)
            g_norm = np.linalg.norm(grad.reshape(batch, -1), axis=1).mean()
            n_norm = np.linalg.norm(noise.reshape(batch, -1), axis=1).mean()
            step = 2.0 * (snr * n_norm / max(g_norm, 1e-12)) ** 2
            x = x + step * grad + np.sqrt(2.0 * step) * noise
    return x
