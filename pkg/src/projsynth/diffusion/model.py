"""Prompt-conditioned latent diffusion estimator."""

import math

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import InvalidArgumentError
from ..io.checkpoint import Checkpoint, config_hash
from ..nn.layers import seeded
from ..nn.optim import OptimizerState, optimizer_step
from ..nn.params import ParameterStore
from ..prompts import PromptRegistry, TaskConfig
from ..rng import RngState, gaussian_sample
from .ddpm import ddim_step, draw_training_noise, timestep_sequence
from .schedules import make_schedule
from .unet import ConditionalUNet


class LatentDiffusion(BaseEstimator):
    """Noise-prediction diffusion over autoencoder latents, one latent space per prompt.

    ``fit(latents, prompts)`` takes latents shaped ``(n, h, w, c)`` and one prompt
    string per item. Each prompt gets an embedding, per-channel latent
    statistics and an adapter vector; the U-Net backbone is shared unless
    ``separate_backbones`` is set.

    With ``ema_decay > 0`` an exponential moving average of the parameters is
    kept during training and replaces them at the end; sampling then uses the
    averaged weights.
    """

    def __init__(self, T=1000, beta_start=1e-4, beta_end=0.02, base_channels=64, channel_mult=(1, 2, 2),
                 num_res_blocks=2, embedding_dim=64, optimizer="adamw", lr=2e-6, weight_decay=0.01,
                 steps=1000, batch_size=32, ema_decay=0.0, separate_backbones=False, seed=0, verbose=False):
        self.T = T
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.base_channels = base_channels
        self.channel_mult = channel_mult
        self.num_res_blocks = num_res_blocks
        self.embedding_dim = embedding_dim
        self.optimizer = optimizer
        self.lr = lr
        self.weight_decay = weight_decay
        self.steps = steps
        self.batch_size = batch_size
        self.ema_decay = ema_decay
        self.separate_backbones = separate_backbones
        self.seed = seed
        self.verbose = verbose

    def _build(self, latent_shape, prompts):
        self.schedule_ = make_schedule(self.T, self.beta_start, self.beta_end)
        self.latent_shape_ = tuple(int(s) for s in latent_shape)
        c = self.latent_shape_[-1]
        n_nets = len(prompts) if self.separate_backbones else 1
        rng = RngState(self.seed, stream=11)
        self.nets_ = []
        for k in range(n_nets):
            with seeded(rng.child(k)):
                self.nets_.append(ConditionalUNet(c, self.base_channels, tuple(self.channel_mult),
                                                  self.num_res_blocks, self.embedding_dim))
        self.registry_ = PromptRegistry(self.embedding_dim, self.nets_[0].mid_channels, c)
        for p in prompts:
            self.registry_.register(p, RngState(self.seed, stream=12))
        params = ParameterStore()
        for k, net in enumerate(self.nets_):
            params.update(dict(ParameterStore.from_module(net, prefix=f"unet{k}.").items()))
        params.update(self.registry_.parameters())
        self.params_ = params

    def _net(self, task_id):
        return self.nets_[task_id if self.separate_backbones else 0]

    def fit(self, X, y):
        z = np.asarray(X, dtype=np.float64)
        if z.ndim != 4 or z.shape[0] == 0:
            raise InvalidArgumentError(f"latents must be a non-empty (n, h, w, c) array, got {z.shape}")
        prompts = list(y)
        if len(prompts) != z.shape[0]:
            raise InvalidArgumentError("need one prompt per latent")
        order = list(dict.fromkeys(prompts))
        self._build(z.shape[1:], order)
        task_ids = np.array([self.registry_.get(p).task_id for p in prompts])
        normed = np.empty_like(z)
        for task in self.registry_:
            sel = task_ids == task.task_id
            task.set_latent_stats(z[sel])
            normed[sel] = task.normalize(z[sel])
        self.loss_history_ = []
        if self.steps <= 0:
            return self

        data = torch.from_numpy(normed).float().permute(0, 3, 1, 2).contiguous()
        ab = torch.from_numpy(self.schedule_.alpha_bars).float()
        rng = RngState(self.seed, stream=13)
        opt = OptimizerState(self.optimizer, lr=self.lr,
                             weight_decay=self.weight_decay if self.optimizer == "adamw" else 0.0)
        if not 0.0 <= self.ema_decay < 1.0:
            raise InvalidArgumentError("ema_decay must lie in [0, 1)")
        ema = {k: t.detach().clone() for k, t in self.params_.items()} if self.ema_decay > 0 else None
        n = data.shape[0]
        perm, cursor = rng.generator().permutation(n), 0
        for step in range(self.steps):
            if cursor + self.batch_size > n:
                perm, cursor = rng.generator().permutation(n), 0
            idx = perm[cursor:cursor + self.batch_size]
            cursor += self.batch_size
            ts, eps = draw_training_noise((len(idx), *data.shape[1:]), self.schedule_, rng.child(step))
            ts_t = torch.from_numpy(ts)
            eps_t = torch.from_numpy(eps).float()
            a = ab[ts_t - 1][:, None, None, None]
            zt = a.sqrt() * data[idx] + (1 - a).sqrt() * eps_t
            loss = self._batch_loss(zt, ts_t, eps_t, task_ids[idx])
            loss.backward()
            optimizer_step(self.params_, opt)
            if ema is not None:
                with torch.no_grad():
                    for k, t in self.params_.items():
                        ema[k].mul_(self.ema_decay).add_(t.detach(), alpha=1.0 - self.ema_decay)
            self.loss_history_.append(loss.item())
            if self.verbose and (step % 100 == 0 or step == self.steps - 1):
                print(f"diffusion step {step}/{self.steps} loss {np.mean(self.loss_history_[-100:]):.4f}")
        if ema is not None:
            with torch.no_grad():
                for k, t in self.params_.items():
                    t.copy_(ema[k])
        return self

    def _batch_loss(self, zt, ts, eps, tids):
        pred = torch.empty_like(zt)
        groups = np.unique(tids) if self.separate_backbones else [None]
        for g in groups:
            sel = np.arange(len(tids)) if g is None else np.nonzero(tids == g)[0]
            sel_t = torch.from_numpy(sel)
            tasks = [self.registry_.by_id(int(k)) for k in tids[sel]]
            ctx = torch.stack([task.embedding for task in tasks])[:, None, :]
            adapter = torch.stack([task.adapter_scale for task in tasks])
            net = self._net(int(g) if g is not None else 0)
            pred[sel_t] = net(zt[sel_t], ts[sel_t], ctx, adapter)
        return ((pred - eps) ** 2).mean()

    # -- inference ----------------------------------------------------
    def _resolve(self, task):
        return task if isinstance(task, TaskConfig) else self.registry_.get(task)

    def predict_noise(self, z_t, t, task):
        """Noise estimate for normalised latents ``z_t`` of shape ``(n, h, w, c)``."""
        check_is_fitted(self, "nets_")
        task = self._resolve(task)
        z = np.asarray(z_t, dtype=np.float64)
        if z.ndim != 4 or tuple(z.shape[1:]) != self.latent_shape_:
            raise InvalidArgumentError(f"latents must be (n, {', '.join(map(str, self.latent_shape_))}), got {z.shape}")
        ts = np.broadcast_to(np.asarray(t, dtype=np.int64), (z.shape[0],))
        with torch.no_grad():
            zt = torch.from_numpy(z).float().permute(0, 3, 1, 2)
            ctx = task.embedding[None, None, :].expand(z.shape[0], 1, -1)
            adapter = task.adapter_scale[None].expand(z.shape[0], -1)
            out = self._net(task.task_id)(zt, torch.from_numpy(ts.copy()), ctx, adapter)
        return out.permute(0, 2, 3, 1).numpy().astype(np.float64)

    def sample(self, prompt, n=1, steps=72, eta=1.0, seed=0, batch_size=64):
        """Draw ``n`` latents for ``prompt``, de-normalised with the task's statistics."""
        check_is_fitted(self, "nets_")
        task = self._resolve(prompt)
        if steps > self.schedule_.T:
            raise InvalidArgumentError(f"steps {steps} exceeds T = {self.schedule_.T}")
        seq = timestep_sequence(self.schedule_.T, steps)
        out = []
        for lo in range(0, n, batch_size):
            m = min(batch_size, n - lo)
            rng = RngState(int(seed), stream=1000 + task.task_id).child(lo // batch_size)
            z = gaussian_sample(rng, (m, *self.latent_shape_))
            for k in range(len(seq) - 1, -1, -1):
                t = int(seq[k])
                t_prev = int(seq[k - 1]) if k > 0 else 0
                eps_hat = self.predict_noise(z, t, task)
                z = ddim_step(z, t, eps_hat, eta, self.schedule_, rng, t_prev=t_prev)
            out.append(task.denormalize(z))
        return np.concatenate(out)

    # -- persistence --------------------------------------------------
    def to_checkpoint(self, extra_config=None):
        check_is_fitted(self, "nets_")
        params = self.get_params()
        params["channel_mult"] = list(params["channel_mult"])
        config = {"estimator": params, "latent_shape": list(self.latent_shape_),
                  "schedule": self.schedule_.to_dict(), "registry": self.registry_.to_manifest()}
        config.update(extra_config or {})
        config["hash"] = config_hash(config)
        tensors = {name: t.detach().numpy().copy() for name, t in self.params_.items()}
        return Checkpoint("diffusion", config, tensors, seed=self.seed)

    @classmethod
    def from_checkpoint(cls, ckpt):
        params = dict(ckpt.config["estimator"])
        params["channel_mult"] = tuple(params["channel_mult"])
        est = cls(**params)
        prompts = [t["prompt"] for t in sorted(ckpt.config["registry"]["tasks"], key=lambda e: e["task_id"])]
        est._build(ckpt.config["latent_shape"], prompts)
        est.registry_ = PromptRegistry.from_manifest(ckpt.config["registry"], ckpt.tensors)
        params_store = ParameterStore()
        for k, net in enumerate(est.nets_):
            params_store.update(dict(ParameterStore.from_module(net, prefix=f"unet{k}.").items()))
        params_store.update(est.registry_.parameters())
        params_store.load_numpy(ckpt.tensors)
        est.params_ = params_store
        est.loss_history_ = []
        return est
