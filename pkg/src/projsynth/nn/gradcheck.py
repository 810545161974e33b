import numpy as np
import torch

from ..rng import as_rng


def grad_check(f, params, step=1e-4, max_elements=None, rng=None):
    """Largest discrepancy between reverse-mode and central-difference gradients.

    ``f`` maps the list ``params`` (float64 tensors) to a scalar tensor. The
    error of each entry is scaled by the largest gradient magnitude seen, so
    vanishing entries do not blow up the ratio. ``max_elements`` limits the
    number of probed entries per tensor (chosen with ``rng``).
    """
    params = [p.detach().to(torch.float64).clone().requires_grad_(True) for p in params]
    out = f(params)
    grads = torch.autograd.grad(out, params, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    rng = as_rng(rng)

    worst = 0.0
    scale = 0.0
    diffs = []
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat = p.view(-1)
            idx = np.arange(flat.numel())
            if max_elements is not None and flat.numel() > max_elements:
                idx = np.sort(rng.generator().choice(flat.numel(), size=max_elements, replace=False))
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + step
                hi = f(params).item()
                flat[i] = orig - step
                lo = f(params).item()
                flat[i] = orig
                numeric = (hi - lo) / (2 * step)
                analytic = g.reshape(-1)[i].item()
                diffs.append(abs(analytic - numeric))
                scale = max(scale, abs(analytic), abs(numeric))
    if diffs:
        worst = max(diffs)
    return worst / scale if scale > 0 else worst
