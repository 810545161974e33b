"""Latent DDPM corruption, the noise-prediction loss, and DDIM-family sampling.

``ddim_step`` covers the whole eta family: ``eta = 1`` on consecutive steps is
the ancestral update ``(1/sqrt(a_t)) (z_t - (1 - a_t)/sqrt(1 - abar_t) eps) + sigma_t n``
with ``sigma_t^2 = beta_t (1 - abar_{t-1}) / (1 - abar_t)``; ``eta = 0`` is the
deterministic DDIM update through the predicted clean latent.
"""

import math

import numpy as np

from ..errors import InvalidArgumentError
from ..rng import gaussian_sample


def ddpm_perturb(z0, t, eps, sched):
    """``z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps``."""
    t = sched.check_step(t)
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise InvalidArgumentError(f"noise shape {eps.shape} != latent shape {z0.shape}")
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def forward_chain(z0, t, sched, rng):
    """Iterate the one-step kernel ``q(z_s | z_{s-1})`` for ``s = 1..t``."""
    z = np.asarray(z0, dtype=np.float64)
    for s in range(1, sched.check_step(t) + 1):
        b = sched.beta(s)
        z = math.sqrt(1.0 - b) * z + math.sqrt(b) * gaussian_sample(rng, z.shape)
    return z


def diffusion_loss(denoiser, z0, context, sched, rng, item_ids=None):
    """Mean squared noise-prediction error over a batch.

    Each item draws its timestep (uniform on ``1..T``) and noise from the
    sub-stream ``rng.child(item_id)`` (ids default to batch positions), so the
    loss does not depend on batch order.
    ``denoiser(z_t, t, context)`` receives the whole batch at once; ``context``
    is any per-item conditioning (or ``None``).
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.shape[0] == 0:
        raise InvalidArgumentError("empty batch")
    ts, eps = draw_training_noise(z0.shape, sched, rng, item_ids)
    zt = np.stack([ddpm_perturb(z, t, e, sched) for z, t, e in zip(z0, ts, eps)])
    pred = np.asarray(denoiser(zt, ts, context), dtype=np.float64)
    if pred.shape != zt.shape:
        raise InvalidArgumentError(f"denoiser returned shape {pred.shape}, expected {zt.shape}")
    return float(np.mean((pred - eps) ** 2))


def draw_training_noise(shape, sched, rng, item_ids=None):
    ids = range(shape[0]) if item_ids is None else [int(i) for i in item_ids]
    if len(ids) != shape[0]:
        raise InvalidArgumentError("need one item id per batch item")
    ts, eps = [], []
    for i in ids:
        gen = rng.child(i).generator()
        ts.append(int(gen.integers(1, sched.T + 1)))
        eps.append(gen.standard_normal(shape[1:]))
    return np.asarray(ts), np.stack(eps)


def ddim_sigma(t, t_prev, eta, sched):
    if t_prev <= 0:
        return 0.0
    ab, ab_prev = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    return eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab)) * math.sqrt(1.0 - ab / ab_prev)


def ddim_step(z_t, t, eps_hat, eta, sched, rng=None, t_prev=None):
    """One reverse step from ``t`` to ``t_prev`` (default ``t - 1``)."""
    t = sched.check_step(t)
    t_prev = t - 1 if t_prev is None else int(t_prev)
    if not 0 <= t_prev < t:
        raise InvalidArgumentError(f"t_prev {t_prev} must lie in [0, {t})")
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgumentError("eta must lie in [0, 1]")
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    ab, ab_prev = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    z0_hat = (z_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)
    sigma = ddim_sigma(t, t_prev, eta, sched)
    direction = math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_hat
    out = math.sqrt(ab_prev) * z0_hat + direction
    if sigma > 0:
        if rng is None:
            raise InvalidArgumentError("a stochastic step (eta > 0) needs an rng")
        out = out + sigma * gaussian_sample(rng, z_t.shape)
    return out


def timestep_sequence(T, steps):
    """Evenly spaced increasing timesteps in ``1..T`` of length ``steps`` (ends at ``T``)."""
    if steps < 1 or steps > T:
        raise InvalidArgumentError(f"steps must lie in [1, {T}], got {steps}")
    seq = np.unique(np.round(np.linspace(1, T, steps)).astype(int))
    return seq


def sample(denoiser, context, steps, eta, sched, rng, latent_shape, n=1):
    """Reverse diffusion from ``z_T ~ N(0, I)`` over an evenly spaced sub-sequence.

    ``denoiser(z_t, t_array, context)`` predicts the noise for a batch of ``n``
    latents of ``latent_shape``.
    """
    if steps > sched.T:
        raise InvalidArgumentError(f"steps {steps} exceeds T = {sched.T}")
    seq = timestep_sequence(sched.T, steps)
    z = gaussian_sample(rng, (n, *latent_shape))
    for k in range(len(seq) - 1, -1, -1):
        t = int(seq[k])
        t_prev = int(seq[k - 1]) if k > 0 else 0
        eps_hat = np.asarray(denoiser(z, np.full(n, t), context), dtype=np.float64)
        z = ddim_step(z, t, eps_hat, eta, sched, rng, t_prev=t_prev)
    return z
