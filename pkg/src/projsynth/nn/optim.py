"""Adam and AdamW with bias correction, applied in place to a ParameterStore."""

from dataclasses import dataclass, field

import torch

from ..errors import InvalidArgumentError, PreconditionError


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("adam", "adamw"):
            raise InvalidArgumentError(f"unknown optimizer kind {self.kind!r}")


def optimizer_step(params, state):
    """One Adam/AdamW update of every parameter holding a gradient; zeroes gradients.

    Parameters without a gradient this step are left untouched. AdamW applies
    decoupled decay ``p *= 1 - lr * weight_decay``; plain Adam folds the decay
    into the gradient.
    """
    live = [(n, p) for n, p in params.items() if p.grad is not None]
    if not live:
        raise PreconditionError("optimizer_step called before any gradient was populated")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    with torch.no_grad():
        for name, p in live:
            grad = p.grad
            if state.kind == "adam" and state.weight_decay:
                grad = grad + state.weight_decay * p
            m = state.first_moment.get(name)
            if m is None:
                m = state.first_moment[name] = torch.zeros_like(p)
                state.second_moment[name] = torch.zeros_like(p)
            v = state.second_moment[name]
            m.mul_(b1).add_(grad, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(grad, grad, value=1.0 - b2)
            if state.kind == "adamw" and state.weight_decay:
                p.mul_(1.0 - state.lr * state.weight_decay)
            denom = (v / corr2).sqrt_().add_(state.eps)
            update = torch.where(denom > 0, (m / corr1) / denom, torch.zeros_like(m))
            p.sub_(state.lr * update)
    params.zero_grad()
