from collections import OrderedDict

import numpy as np
import torch

from ..errors import InvalidArgumentError


class ParameterStore:
    """Ordered ``name -> tensor`` map; gradients live in each tensor's ``.grad``."""

    def __init__(self, tensors=None):
        self._tensors = OrderedDict()
        for name, value in (tensors or {}).items():
            self.add(name, value)

    @classmethod
    def from_module(cls, module, prefix=""):
        return cls(OrderedDict((prefix + n, p) for n, p in module.named_parameters()))

    def add(self, name, tensor):
        if name in self._tensors:
            raise InvalidArgumentError(f"duplicate parameter name {name!r}")
        if not tensor.requires_grad:
            tensor.requires_grad_(True)
        self._tensors[name] = tensor

    def update(self, other):
        for name, tensor in other.items():
            self.add(name, tensor)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def to_numpy(self):
        return OrderedDict((n, t.detach().cpu().numpy().copy()) for n, t in self._tensors.items())

    def load_numpy(self, arrays):
        with torch.no_grad():
            for name, t in self._tensors.items():
                if name not in arrays:
                    raise InvalidArgumentError(f"missing parameter {name!r}")
                arr = np.asarray(arrays[name])
                if tuple(arr.shape) != tuple(t.shape):
                    raise InvalidArgumentError(f"shape mismatch for {name!r}: {arr.shape} vs {tuple(t.shape)}")
                t.copy_(torch.from_numpy(arr).to(t.dtype))
