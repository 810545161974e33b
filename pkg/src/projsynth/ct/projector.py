"""Ray-driven fan-beam projector and its exact adjoint."""

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_stack
from ..errors import InvalidArgumentError
from .geometry import DEFAULT_HALF_EXTENT, FanBeamGeometry
from .siddon import ray_intersections

_CHUNK_ELEMENTS = 4_000_000


def _build_matrix(geom, shape, half_extent):
    src, det = geom.ray_endpoints()
    src = src.reshape(-1, 2)
    det = det.reshape(-1, 2)
    n_rays = src.shape[0]
    per_ray = shape[0] + shape[1] + 4
    chunk = max(1, _CHUNK_ELEMENTS // per_ray)
    rows, cols, vals = [], [], []
    for lo in range(0, n_rays, chunk):
        hi = min(n_rays, lo + chunk)
        r, c, v = ray_intersections(src[lo:hi], det[lo:hi], shape, half_extent)
        rows.append(r + lo)
        cols.append(c)
        vals.append(v)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    # Sum duplicates (a pixel hit twice by one ray only when grazing a corner).
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n_rays, shape[0] * shape[1])).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


@lru_cache(maxsize=16)
def _cached_matrix(geom_key, shape, half_extent):
    geom = FanBeamGeometry(*geom_key[:5], view_angles=geom_key[5])
    return _build_matrix(geom, shape, half_extent)


def system_matrix(geom, shape, half_extent=DEFAULT_HALF_EXTENT):
    """Sparse (rays x pixels) matrix of intersection lengths; rays ordered view-major."""
    shape = (int(shape[0]), int(shape[1]))
    return _cached_matrix(geom.key(), shape, float(half_extent))


def forward_project(image, geom, half_extent=DEFAULT_HALF_EXTENT):
    """Fan-beam sinogram (views x detectors) of one image or a stack of images.

    The image support should lie inside ``geom.fov_radius``; parts outside it are
    still integrated but are not seen by every view.
    """
    images, single = check_stack(image, "image")
    mat = system_matrix(geom, images.shape[1:], half_extent)
    flat = images.reshape(images.shape[0], -1)
    sino = (mat @ flat.T).T.reshape(-1, geom.num_views, geom.detector_count)
    return sino[0] if single else sino


def adjoint_backproject(sino, geom, image_shape, half_extent=DEFAULT_HALF_EXTENT):
    """Exact transpose of :func:`forward_project`."""
    sinos, single = check_stack(sino, "sinogram")
    if sinos.shape[1:] != (geom.num_views, geom.detector_count):
        raise InvalidArgumentError(
            f"sinogram shape {sinos.shape[1:]} does not match geometry "
            f"({geom.num_views}, {geom.detector_count})")
    mat = system_matrix(geom, image_shape, half_extent)
    out = (mat.T @ sinos.reshape(sinos.shape[0], -1).T).T
    out = out.reshape(-1, *image_shape)
    return out[0] if single else out


class FanBeamProjector(TransformerMixin, BaseEstimator):
    """Transformer from images to fan-beam sinograms.

    ``fit`` builds (and caches) the system matrix for the image shape seen in ``X``.
    """

    def __init__(self, geometry=None, half_extent=DEFAULT_HALF_EXTENT):
        self.geometry = geometry
        self.half_extent = half_extent

    def fit(self, X, y=None):
        images, _ = check_stack(X, "X")
        self.geometry_ = self.geometry if self.geometry is not None else FanBeamGeometry.desk()
        self.image_shape_ = images.shape[1:]
        self.matrix_ = system_matrix(self.geometry_, self.image_shape_, self.half_extent)
        return self

    def transform(self, X):
        check_is_fitted(self, "matrix_")
        images, single = check_stack(X, "X")
        if images.shape[1:] != self.image_shape_:
            raise InvalidArgumentError(f"expected images of shape {self.image_shape_}, got {images.shape[1:]}")
        return forward_project(images[0] if single else images, self.geometry_, self.half_extent)

    def adjoint(self, sinograms):
        check_is_fitted(self, "matrix_")
        return adjoint_backproject(sinograms, self.geometry_, self.image_shape_, self.half_extent)


