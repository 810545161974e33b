import math

import numpy as np

from .features import (ExternalFeatures, FrozenRandomConv, IdentityFlatten, centroid_accuracy, extract_features,
                       make_extractor)
from .linalg import matrix_sqrt_psd, trace_sqrt_product
from .scores import (Kernel, KernelKind, fid, inception_score, inception_score_splits, kid, kid_statistic,
                     mmd2_unbiased)


def psnr(reference, estimate, data_range=1.0, mask=None):
    """Peak signal-to-noise ratio in dB (``inf`` for identical inputs)."""
    ref = np.asarray(reference, dtype=np.float64)
    est = np.asarray(estimate, dtype=np.float64)
    diff = (ref - est) if mask is None else (ref - est)[mask]
    mse = float(np.mean(diff**2))
    return math.inf if mse == 0 else 10.0 * math.log10(data_range**2 / mse)


__all__ = ["ExternalFeatures", "FrozenRandomConv", "IdentityFlatten", "Kernel", "KernelKind", "centroid_accuracy",
           "extract_features", "fid", "inception_score", "inception_score_splits", "kid", "kid_statistic",
           "make_extractor", "matrix_sqrt_psd", "mmd2_unbiased", "psnr", "trace_sqrt_product"]
