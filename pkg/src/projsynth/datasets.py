"""On-disk sinogram datasets and degraded/clean exports for downstream reconstruction trainers.

A dataset directory holds ``index.json`` plus, per item, a sinogram PROT file
and the phantom image it was projected from.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_stack
from .ct.fbp import fbp_reconstruct
from .ct.geometry import DEFAULT_HALF_EXTENT, FanBeamGeometry
from .ct.projector import forward_project
from .errors import FormatError, InvalidArgumentError
from .io.prot import read_prot, write_prot
from .rng import as_rng

INDEX = "index.json"


@dataclass
class SinogramDataset:
    sinograms: np.ndarray
    images: np.ndarray
    prompts: list
    geometry: FanBeamGeometry
    half_extent: float = DEFAULT_HALF_EXTENT

    def select(self, prompt):
        sel = np.array([p == prompt for p in self.prompts])
        return self.sinograms[sel], self.images[sel]


def build_dataset(images, geom, out_dir, prompts=None, half_extent=DEFAULT_HALF_EXTENT):
    """Project every image and write the dataset; returns the index dict."""
    imgs, _ = check_stack(images, "images")
    # project exactly what gets stored so items can be re-projected from disk
    imgs = imgs.astype(np.float32).astype(np.float64)
    if prompts is None:
        prompts = [""] * len(imgs)
    prompts = list(prompts)
    if len(prompts) != len(imgs):
        raise InvalidArgumentError(f"{len(prompts)} prompt labels for {len(imgs)} images")
    sinos = forward_project(imgs, geom, half_extent)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        items = []
        for i, (img, sino, prompt) in enumerate(zip(imgs, sinos, prompts)):
            entry = {"sinogram": f"sino_{i:05d}.prot", "image": f"image_{i:05d}.prot", "prompt": prompt}
            write_prot(out / entry["sinogram"], sino)
            write_prot(out / entry["image"], img)
            items.append(entry)
        index = {"version": 1, "geometry": geom.to_dict(), "half_extent": half_extent,
                 "image_shape": list(imgs.shape[1:]), "sinogram_shape": list(sinos.shape[1:]), "items": items}
        (out / INDEX).write_text(json.dumps(index, indent=2))
    except OSError as exc:
        raise OSError(f"failed writing dataset to {out}: {exc}") from exc
    return index


def load_dataset(path):
    path = Path(path)
    index_path = path / INDEX
    if not index_path.exists():
        raise FormatError(f"no dataset index at {index_path}")
    index = json.loads(index_path.read_text())
    items = index["items"]
    sinos = np.stack([read_prot(path / e["sinogram"]) for e in items]).astype(np.float64)
    images = np.stack([read_prot(path / e["image"]) for e in items]).astype(np.float64)
    return SinogramDataset(sinos, images, [e["prompt"] for e in items], FanBeamGeometry.from_dict(index["geometry"]),
                           index.get("half_extent", DEFAULT_HALF_EXTENT))


def sparse_view(sinos, geom, k):
    """Keep every ``(num_views / k)``-th view; returns the reduced sinograms and geometry."""
    if not isinstance(k, (int, np.integer)) or k < 1 or geom.num_views % k:
        raise InvalidArgumentError(f"view count {k!r} must divide {geom.num_views}")
    stride = geom.num_views // k
    angles = np.asarray(geom.view_angles)[::stride]
    sub = FanBeamGeometry(geom.source_distance, geom.detector_distance, geom.detector_count,
                          geom.detector_total_width, k, tuple(float(a) for a in angles))
    return np.asarray(sinos)[..., ::stride, :], sub


def low_dose_counts(sinos, photons, rng, attenuation_scale=1.0):
    """Poisson photon counts with mean ``photons * exp(-attenuation_scale * sino)``."""
    if not photons > 0:
        raise InvalidArgumentError(f"photon count must be positive, got {photons!r}")
    mean = photons * np.exp(-attenuation_scale * np.asarray(sinos, dtype=np.float64))
    return as_rng(rng).generator().poisson(mean).astype(np.float64)


def low_dose(sinos, photons, rng, attenuation_scale=1.0):
    """Noisy line integrals ``-log(max(counts, 1) / photons) / attenuation_scale``."""
    counts = low_dose_counts(sinos, photons, rng, attenuation_scale)
    return -np.log(np.maximum(counts, 1.0) / photons) / attenuation_scale


def export_downstream(sinos, geom, out_dir, mode, views=None, photons=5e4, seed=0, attenuation_scale=0.1,
                      image_shape=(64, 64), half_extent=DEFAULT_HALF_EXTENT):
    """Write degraded/clean sinogram pairs and their FBP images; returns the index dict.

    ``mode`` is ``"sparse-view"`` (keep ``views`` views) or ``"low-dose"``
    (Poisson noise at ``photons`` incident photons per bin).
    """
    sinos, _ = check_stack(sinos, "sinograms")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = as_rng(seed)
    params = {"mode": mode}
    if mode == "sparse-view":
        if views is None:
            raise InvalidArgumentError("sparse-view export needs a view count")
        degraded, sub_geom = sparse_view(sinos, geom, views)
        params.update(views=int(views), stride=geom.num_views // views, degraded_geometry=sub_geom.to_dict())
    elif mode == "low-dose":
        degraded = np.stack([low_dose(s, photons, rng.child(i), attenuation_scale) for i, s in enumerate(sinos)])
        sub_geom = geom
        params.update(photons=float(photons), attenuation_scale=attenuation_scale)
    else:
        raise InvalidArgumentError(f"unknown export mode {mode!r}; use sparse-view or low-dose")
    items = []
    for i in range(len(sinos)):
        entry = {name: f"{name}_{i:05d}.prot" for name in ("clean", "degraded", "clean_fbp", "degraded_fbp")}
        write_prot(out / entry["clean"], sinos[i])
        write_prot(out / entry["degraded"], degraded[i])
        write_prot(out / entry["clean_fbp"], fbp_reconstruct(sinos[i], geom, image_shape, half_extent=half_extent))
        write_prot(out / entry["degraded_fbp"],
                   fbp_reconstruct(degraded[i], sub_geom, image_shape, half_extent=half_extent))
        items.append(entry)
    index = {"version": 1, "geometry": geom.to_dict(), "seed": seed, **params, "items": items}
    (out / INDEX).write_text(json.dumps(index, indent=2))
    return index
