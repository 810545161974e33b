import numpy as np

from ..errors import InvalidArgumentError


def _check_symmetric(m, name):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.T).max(initial=0.0) > 1e-8 * scale:
        raise InvalidArgumentError(f"{name} is not symmetric")
    return (m + m.T) / 2


def _psd_eigh(m, name):
    m = _check_symmetric(m, name)
    w, v = np.linalg.eigh(m)
    tol = 1e-8 * max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.size and w.min() < -tol:
        raise InvalidArgumentError(f"{name} is indefinite (min eigenvalue {w.min():.3e})")
    return np.clip(w, 0.0, None), v


def matrix_sqrt_psd(m):
    """Symmetric square root of a PSD matrix by eigendecomposition; tiny negative eigenvalues clamp to 0."""
    w, v = _psd_eigh(m, "matrix")
    return (v * np.sqrt(w)) @ v.T


def trace_sqrt_product(a, b):
    """``tr((A B)^(1/2))`` for PSD ``A``, ``B`` via ``tr((A^(1/2) B A^(1/2))^(1/2))``."""
    ra = matrix_sqrt_psd(a)
    w, _ = _psd_eigh(ra @ _check_symmetric(b, "matrix") @ ra, "product")
    return float(np.sqrt(w).sum())
