"""Prompt registry: text prompts mapped to learned embeddings and per-task latent spaces.

A task's latent space is the shared autoencoder latent grid normalised with
that task's own per-channel statistics, plus a per-task modulation vector
applied inside the shared denoiser.
"""

import re
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import torch

from .errors import InvalidArgumentError, UnknownPromptError
from .rng import as_rng


def normalize_prompt(prompt):
    """Lowercase, trim and collapse internal whitespace."""
    return re.sub(r"\s+", " ", str(prompt).strip().lower())


@dataclass
class TaskConfig:
    task_id: int
    prompt: str
    embedding: torch.Tensor
    adapter_scale: torch.Tensor
    latent_mean: np.ndarray
    latent_std: np.ndarray

    def normalize(self, z):
        """Map latents ``(..., c)`` of this task to zero mean, unit variance per channel."""
        return (np.asarray(z) - self.latent_mean) / self.latent_std

    def denormalize(self, z):
        return np.asarray(z) * self.latent_std + self.latent_mean

    def set_latent_stats(self, latents):
        z = np.asarray(latents, dtype=np.float64)
        flat = z.reshape(-1, z.shape[-1])
        self.latent_mean = flat.mean(axis=0)
        self.latent_std = np.maximum(flat.std(axis=0), 1e-6)


class PromptRegistry:
    """Ordered map from normalised prompt to :class:`TaskConfig`."""

    def __init__(self, embedding_dim=64, adapter_dim=128, latent_channels=3):
        self.embedding_dim = embedding_dim
        self.adapter_dim = adapter_dim
        self.latent_channels = latent_channels
        self._tasks = OrderedDict()

    def __len__(self):
        return len(self._tasks)

    def __contains__(self, prompt):
        return normalize_prompt(prompt) in self._tasks

    def __iter__(self):
        return iter(self._tasks.values())

    @property
    def prompts(self):
        return list(self._tasks)

    def register(self, prompt, rng=None):
        key = normalize_prompt(prompt)
        if not key:
            raise InvalidArgumentError("prompt is empty after normalisation")
        if key in self._tasks:
            return self._tasks[key]
        gen = as_rng(rng).child(len(self._tasks)).generator()
        emb = gen.standard_normal(self.embedding_dim) / np.sqrt(self.embedding_dim)
        task = TaskConfig(
            task_id=len(self._tasks),
            prompt=key,
            embedding=torch.tensor(emb, dtype=torch.float32, requires_grad=True),
            adapter_scale=torch.ones(self.adapter_dim, dtype=torch.float32, requires_grad=True),
            latent_mean=np.zeros(self.latent_channels),
            latent_std=np.ones(self.latent_channels),
        )
        self._tasks[key] = task
        return task

    def get(self, prompt):
        key = normalize_prompt(prompt)
        try:
            return self._tasks[key]
        except KeyError:
            raise UnknownPromptError(key) from None

    def by_id(self, task_id):
        return list(self._tasks.values())[task_id]

    def parameters(self):
        out = OrderedDict()
        for task in self._tasks.values():
            out[f"prompt.{task.task_id}.embedding"] = task.embedding
            out[f"prompt.{task.task_id}.adapter_scale"] = task.adapter_scale
        return out

    # -- persistence --------------------------------------------------
    def to_manifest(self):
        return {
            "embedding_dim": self.embedding_dim,
            "adapter_dim": self.adapter_dim,
            "latent_channels": self.latent_channels,
            "tasks": [{"prompt": t.prompt, "task_id": t.task_id,
                       "latent_mean": [float(v) for v in t.latent_mean],
                       "latent_std": [float(v) for v in t.latent_std]} for t in self._tasks.values()],
        }

    def tensors(self):
        return OrderedDict((name, t.detach().numpy().copy()) for name, t in self.parameters().items())

    @classmethod
    def from_manifest(cls, manifest, tensors):
        reg = cls(manifest["embedding_dim"], manifest["adapter_dim"], manifest["latent_channels"])
        for entry in sorted(manifest["tasks"], key=lambda e: e["task_id"]):
            task = reg.register(entry["prompt"], rng=0)
            with torch.no_grad():
                task.embedding.copy_(torch.from_numpy(np.asarray(tensors[f"prompt.{task.task_id}.embedding"])))
                task.adapter_scale.copy_(
                    torch.from_numpy(np.asarray(tensors[f"prompt.{task.task_id}.adapter_scale"])))
            task.latent_mean = np.asarray(entry["latent_mean"], dtype=np.float64)
            task.latent_std = np.asarray(entry["latent_std"], dtype=np.float64)
        return reg


def register_prompt(registry, prompt, rng=None):
    return registry.register(prompt, rng)


def text_encode(registry, prompt):
    """Current learned embedding of the prompt's task (a copy)."""
    return registry.get(prompt).embedding.detach().numpy().copy()


def select_latent_space(registry, prompt):
    return registry.get(prompt)


def conditioned_denoise(model, z_t, t, task):
    """Noise prediction for latents ``z_t`` of shape ``(n, h, w, c)`` in ``task``'s latent space.

    ``model`` is a :class:`~projsynth.diffusion.LatentDiffusion` (or anything
    exposing ``predict_noise(z_t, t, task)``).
    """
    return model.predict_noise(z_t, t, task)
