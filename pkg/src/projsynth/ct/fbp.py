"""Ramp filtering and fan-beam filtered backprojection for flat detectors."""

import enum
import math

import numpy as np
from scipy.linalg import toeplitz
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import check_stack
from ..errors import InvalidArgumentError
from .geometry import DEFAULT_HALF_EXTENT, FanBeamGeometry, pixel_centers


class FilterKind(enum.Enum):
    RAM_LAK = "ram-lak"
    HANN = "hann"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgumentError(f"unknown filter {value!r}") from None


def ram_lak_kernel(n, spacing=1.0):
    """Discrete Ram-Lak kernel at lags ``-(n-1) .. n-1``."""
    lags = np.arange(-(n - 1), n)
    h = np.zeros(lags.shape, dtype=np.float64)
    h[lags == 0] = 1.0 / (4.0 * spacing**2)
    odd = lags % 2 == 1
    h[odd] = -1.0 / (math.pi**2 * lags[odd].astype(np.float64) ** 2 * spacing**2)
    return lags, h


def _hann_kernel(n, spacing):
    lags, h = ram_lak_kernel(n, spacing)
    size = 1 << int(math.ceil(math.log2(4 * n)))
    circ = np.zeros(size)
    circ[lags % size] = h
    freq = np.fft.fftfreq(size)
    window = 0.5 * (1.0 + np.cos(2.0 * math.pi * freq))
    filtered = np.real(np.fft.ifft(np.fft.fft(circ) * window))
    return lags, filtered[lags % size]


def filter_kernel(n, kind=FilterKind.RAM_LAK, spacing=1.0):
    kind = FilterKind.parse(kind)
    if kind is FilterKind.RAM_LAK:
        return ram_lak_kernel(n, spacing)
    return _hann_kernel(n, spacing)


def ramp_filter(sino, kind=FilterKind.RAM_LAK, spacing=1.0):
    """Convolve every view row with the ramp kernel (direct spatial convolution).

    ``spacing`` is the detector sample spacing used in the kernel formula. The
    output is the plain discrete convolution; multiply by ``spacing`` to
    approximate the continuous convolution integral.
    """
    sinos, single = check_stack(sino, "sinogram")
    n = sinos.shape[-1]
    if n < 2:
        raise InvalidArgumentError("ramp filtering needs at least 2 detector samples")
    lags, h = filter_kernel(n, kind, spacing)
    centre = n - 1
    # out[i] = sum_j h[i - j] x[j]
    mat = toeplitz(h[centre:], h[centre::-1])
    out = sinos @ mat.T
    return out[0] if single else out


def fbp_reconstruct(sino, geom, image_shape, kind=FilterKind.RAM_LAK, half_extent=DEFAULT_HALF_EXTENT):
    """Fan-beam FBP for a flat, equally spaced detector over a full 2*pi scan.

    Detector samples are rescaled to a virtual detector through the rotation
    centre, cosine weighted, ramp filtered and backprojected with the
    ``1 / U**2`` distance weight and linear interpolation.
    """
    sinos, single = check_stack(sino, "sinogram")
    if sinos.shape[1:] != (geom.num_views, geom.detector_count):
        raise InvalidArgumentError(
            f"sinogram shape {sinos.shape[1:]} does not match geometry "
            f"({geom.num_views}, {geom.detector_count})")
    rows, cols = int(image_shape[0]), int(image_shape[1])
    dso = geom.source_distance
    s = geom.detector_offsets() / geom.magnification
    tau = geom.detector_spacing / geom.magnification

    weighted = sinos * (dso / np.sqrt(dso**2 + s**2))
    # 0.5 because every line is measured twice over a full rotation.
    filtered = 0.5 * tau * ramp_filter(weighted.reshape(-1, geom.detector_count), kind, tau)
    filtered = filtered.reshape(sinos.shape)

    x, y = pixel_centers((rows, cols), half_extent)
    x = x.ravel()
    y = y.ravel()
    out = np.zeros((sinos.shape[0], rows * cols))
    for v, beta in enumerate(geom.view_angles):
        cb, sb = math.cos(beta), math.sin(beta)
        depth = dso - (x * cb + y * sb)
        u = depth / dso
        s_hit = dso * (-x * sb + y * cb) / depth
        pos = (s_hit - s[0]) / tau
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        ok = (i0 >= 0) & (i0 < geom.detector_count - 1)
        i0c = np.clip(i0, 0, geom.detector_count - 2)
        w = np.where(ok, 1.0 / u**2, 0.0)
        row = filtered[:, v, :]
        vals = row[:, i0c] * (1.0 - frac) + row[:, i0c + 1] * frac
        out += vals * w
    out *= geom.angle_step
    out = out.reshape(-1, rows, cols)
    return out[0] if single else out


class FBPReconstructor(TransformerMixin, BaseEstimator):
    """Transformer from sinograms to FBP images."""

    def __init__(self, geometry=None, image_shape=(128, 128), filter="ram-lak",
                 half_extent=DEFAULT_HALF_EXTENT):
        self.geometry = geometry
        self.image_shape = image_shape
        self.filter = filter
        self.half_extent = half_extent

    def fit(self, X=None, y=None):
        self.geometry_ = self.geometry if self.geometry is not None else FanBeamGeometry.desk()
        self.filter_ = FilterKind.parse(self.filter)
        return self

    def transform(self, X):
        if not hasattr(self, "geometry_"):
            self.fit()
        return fbp_reconstruct(X, self.geometry_, self.image_shape, self.filter_, self.half_extent)
