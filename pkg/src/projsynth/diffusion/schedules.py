import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError


@dataclass(frozen=True)
class NoiseSchedule:
    """Discrete DDPM schedule; arrays are indexed by step ``t = 1..T`` at position ``t - 1``."""

    betas: np.ndarray

    @property
    def T(self):
        return len(self.betas)

    @property
    def alphas(self):
        return 1.0 - self.betas

    @property
    def alpha_bars(self):
        return np.cumprod(self.alphas)

    def alpha_bar(self, t):
        """``alpha_bar_t`` with the convention ``alpha_bar_0 = 1``."""
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def beta(self, t):
        return float(self.betas[t - 1])

    def check_step(self, t):
        if isinstance(t, (bool, np.bool_)) or int(t) != t or not 1 <= t <= self.T:
            raise InvalidArgumentError(f"timestep {t!r} outside [1, {self.T}]")
        return int(t)

    def to_dict(self):
        return {"T": self.T, "beta_start": float(self.betas[0]), "beta_end": float(self.betas[-1])}


def make_schedule(T=1000, beta_start=1e-4, beta_end=0.02):
    """Linear beta ramp from ``beta_start`` to ``beta_end`` over ``T`` steps."""
    if int(T) != T or T < 1:
        raise InvalidArgumentError("T must be a positive integer")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidArgumentError("need 0 < beta_start <= beta_end < 1")
    return NoiseSchedule(np.linspace(beta_start, beta_end, int(T), dtype=np.float64))


@dataclass(frozen=True)
class VESchedule:
    """Variance-exploding noise levels ``sigma(t) = sigma_min * (sigma_max / sigma_min) ** t``."""

    sigma_min: float = 0.01
    sigma_max: float = 50.0
    N: int = 500

    def __post_init__(self):
        if not 0.0 < self.sigma_min < self.sigma_max or not math.isfinite(self.sigma_max):
            raise InvalidArgumentError("need 0 < sigma_min < sigma_max")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidArgumentError("N must be a positive integer")

    def sigma(self, t):
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** np.asarray(t, dtype=np.float64)

    @property
    def dt(self):
        return 1.0 / self.N

    def grid(self):
        """``t_i = i / N`` for ``i = 0..N``."""
        return np.arange(self.N + 1) / self.N
