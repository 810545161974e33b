"""End-to-end commands: dataset building, three-stage training, sampling and evaluation."""

import dataclasses
import json
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .autoencoder import SinogramAutoencoder
from .ct.fbp import fbp_reconstruct
from .ct.geometry import DEFAULT_HALF_EXTENT, FanBeamGeometry
from .datasets import build_dataset, load_dataset
from .diffusion.model import LatentDiffusion
from .errors import ConfigurationError, IncompatibleCheckpointError, InvalidArgumentError
from .io.checkpoint import Checkpoint
from .io.previews import write_loss_log, write_pgm
from .io.prot import read_prot, write_prot
from .metrics import (ExternalFeatures, Kernel, fid, inception_score_splits, kid, make_extractor)
from .phantoms import PHANTOM_CLASSES, PhantomSpec, generate_phantoms
from .prompts import normalize_prompt
from .sharpnet import SharpNet

STAGES = ("autoencoder", "diffusion", "sharpnet")


@dataclass
class RunConfig:
    seed: int = 0
    prompts: list = field(default_factory=lambda: ["disks", "bars"])
    image_size: int = 64
    phantoms_per_prompt: int = 400
    views: int = 64
    detectors: int = 64
    geometry: dict = field(default_factory=dict)
    half_extent: float = DEFAULT_HALF_EXTENT
    factor: int = 4
    autoencoder: dict = field(default_factory=dict)
    diffusion: dict = field(default_factory=lambda: {"optimizer": "adamw", "lr": 2e-6})
    sharpnet: dict = field(default_factory=lambda: {"lr": 1e-3})
    steps: int = 72
    eta: float = 1.0
    n_samples: int = 100
    dataset: str = "data"
    out: str = "run"

    def __post_init__(self):
        self.prompts = [normalize_prompt(p) for p in self.prompts]
        if not self.prompts:
            raise ConfigurationError("at least one prompt is required")
        if self.factor not in (4, 8):
            raise ConfigurationError(f"factor must be 4 or 8, got {self.factor}")
        if self.steps < 1 or not 0.0 <= self.eta:
            raise ConfigurationError("steps must be >= 1 and eta >= 0")
        for name in ("seed", "views", "detectors", "image_size"):
            if not isinstance(getattr(self, name), int):
                raise ConfigurationError(f"{name} must be an explicit integer")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)

    def override(self, **flags):
        data = self.to_dict()
        data.update({k: v for k, v in flags.items() if v is not None})
        return self.from_dict(data)

    def geometry_obj(self):
        return FanBeamGeometry(**{**self.geometry, "detector_count": self.detectors, "num_views": self.views})

    def image_shape(self):
        return (self.image_size, self.image_size)

    def autoencoder_params(self):
        return {**self.autoencoder, "downsample_factor": self.factor, "seed": self.seed}

    def diffusion_params(self):
        return {**self.diffusion, "seed": self.seed}

    def sharpnet_params(self):
        return {**self.sharpnet, "seed": self.seed}


def _slug(prompt):
    return re.sub(r"[^a-z0-9]+", "-", prompt).strip("-") or "prompt"


def _say(log, msg):
    if log:
        log(msg)


# -- data -------------------------------------------------------------
def cmd_phantoms(kind, n, out_dir, size=64, seed=0):
    images = generate_phantoms(PhantomSpec(kind, size, seed=seed), n)
    out = Path(out_dir)
    for i, img in enumerate(images):
        write_prot(out / f"{i:05d}.prot", img)
        write_pgm(out / "previews" / f"{i:05d}.pgm", img)
    return images


def cmd_build_dataset(cfg, out_dir=None):
    out_dir = out_dir or cfg.dataset
    for p in cfg.prompts:
        if p not in PHANTOM_CLASSES:
            raise ConfigurationError(f"prompt {p!r} has no phantom class; choose from {PHANTOM_CLASSES}")
    images, labels = [], []
    for p in cfg.prompts:
        images.append(generate_phantoms(PhantomSpec(p, cfg.image_size, seed=cfg.seed), cfg.phantoms_per_prompt))
        labels += [p] * cfg.phantoms_per_prompt
    return build_dataset(np.concatenate(images), cfg.geometry_obj(), out_dir, labels, cfg.half_extent)


# -- training ---------------------------------------------------------
def _stage_dir(cfg, stage):
    return Path(cfg.out) / stage


def _save_stage(ckpt, directory):
    """Write to a sibling temp directory first so a stage is either complete or absent."""
    tmp = directory.with_name(directory.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    ckpt.save(tmp)
    if directory.exists():
        shutil.rmtree(directory)
    tmp.rename(directory)


def _resumable(directory, stage, expected):
    if not Checkpoint.exists(directory):
        return None
    ckpt = Checkpoint.load(directory, stage)
    stored = {k: ckpt.config.get(k) for k in expected}
    return ckpt if stored == json.loads(json.dumps(expected)) else None


def cmd_train(cfg, log=print):
    """Train autoencoder, conditioned diffusion and SharpNet in order, skipping completed stages."""
    data_dir = Path(cfg.dataset)
    if not (data_dir / "index.json").exists():
        raise ConfigurationError(f"dataset not found at {data_dir} (run build-dataset first)")
    data = load_dataset(data_dir)
    missing = [p for p in cfg.prompts if p not in set(data.prompts)]
    if missing:
        raise ConfigurationError(f"prompts {missing} have no items in dataset {data_dir}")
    if data.geometry.key() != cfg.geometry_obj().key():
        raise ConfigurationError(f"dataset geometry at {data_dir} differs from the run configuration")
    keep = np.array([p in cfg.prompts for p in data.prompts])
    sinos, images = data.sinograms[keep], data.images[keep]
    prompts = [p for p, k in zip(data.prompts, keep) if k]
    logs = Path(cfg.out) / "logs"

    ae_dir = _stage_dir(cfg, "autoencoder")
    ae_expected = {"estimator": SinogramAutoencoder(**cfg.autoencoder_params()).get_params()}
    ckpt = _resumable(ae_dir, "autoencoder", ae_expected)
    if ckpt is None:
        _say(log, "stage 1/3: autoencoder")
        ae = SinogramAutoencoder(**cfg.autoencoder_params()).fit(sinos)
        _save_stage(ae.to_checkpoint(), ae_dir)
        write_loss_log(logs / "autoencoder_loss.csv", ae.loss_history_)
    else:
        _say(log, "stage 1/3: autoencoder checkpoint found, skipping")
        ae = SinogramAutoencoder.from_checkpoint(ckpt)
    ae_hash = ae.to_checkpoint().config["hash"]

    diff_dir = _stage_dir(cfg, "diffusion")
    diff_params = LatentDiffusion(**cfg.diffusion_params()).get_params()
    diff_params["channel_mult"] = list(diff_params["channel_mult"])
    ckpt = _resumable(diff_dir, "diffusion", {"estimator": diff_params, "autoencoder_hash": ae_hash})
    if ckpt is None:
        _say(log, "stage 2/3: latent diffusion")
        model = LatentDiffusion(**cfg.diffusion_params()).fit(ae.transform(sinos), prompts)
        _save_stage(model.to_checkpoint({"autoencoder_hash": ae_hash}), diff_dir)
        write_loss_log(logs / "diffusion_loss.csv", model.loss_history_)
    else:
        _say(log, "stage 2/3: diffusion checkpoint found, skipping")

    sharp_dir = _stage_dir(cfg, "sharpnet")
    sharp_expected = {"estimator": SharpNet(**cfg.sharpnet_params()).get_params(),
                      "image_shape": list(cfg.image_shape())}
    if _resumable(sharp_dir, "sharpnet", sharp_expected) is None:
        _say(log, "stage 3/3: sharpnet")
        sharp = SharpNet(**cfg.sharpnet_params()).fit(images)
        ckpt = sharp.to_checkpoint()
        ckpt.config["image_shape"] = list(cfg.image_shape())
        _save_stage(ckpt, sharp_dir)
        write_loss_log(logs / "sharpnet_loss.csv", sharp.loss_history_)
        lam2 = sharp.lambda2
        write_loss_log(logs / "sharpnet_weighted_loss.csv", [lam2 * v for v in sharp.loss_history_])
    else:
        _say(log, "stage 3/3: sharpnet checkpoint found, skipping")
    return {stage: str(_stage_dir(cfg, stage)) for stage in STAGES}


# -- sampling ---------------------------------------------------------
def _load_stage(cfg, stage):
    directory = _stage_dir(cfg, stage)
    if not Checkpoint.exists(directory):
        raise ConfigurationError(f"missing {stage} checkpoint at {directory} (run train first)")
    return Checkpoint.load(directory, stage)


def load_models(cfg, skip_refine=False):
    ae_ckpt = _load_stage(cfg, "autoencoder")
    diff_ckpt = _load_stage(cfg, "diffusion")
    if diff_ckpt.config.get("autoencoder_hash") != ae_ckpt.config.get("hash"):
        raise IncompatibleCheckpointError("diffusion checkpoint was trained against a different autoencoder")
    expected = [cfg.views, cfg.detectors]
    if list(ae_ckpt.config["input_shape"]) != expected:
        raise IncompatibleCheckpointError(
            f"autoencoder expects sinograms {ae_ckpt.config['input_shape']}, run config has {expected}")
    ae = SinogramAutoencoder.from_checkpoint(ae_ckpt)
    model = LatentDiffusion.from_checkpoint(diff_ckpt)
    sharp = None
    if not skip_refine:
        sharp_ckpt = _load_stage(cfg, "sharpnet")
        if list(sharp_ckpt.config.get("image_shape", [])) != list(cfg.image_shape()):
            raise IncompatibleCheckpointError(
                f"sharpnet was trained on {sharp_ckpt.config.get('image_shape')} images, "
                f"run config has {list(cfg.image_shape())}")
        sharp = SharpNet.from_checkpoint(sharp_ckpt)
    return ae, model, sharp


def generate(cfg, prompt, n, steps=None, eta=None, seed=None, skip_refine=False, models=None):
    """In-memory sampling: ``(sinograms, coarse, refined-or-None)``."""
    steps = cfg.steps if steps is None else steps
    eta = cfg.eta if eta is None else eta
    seed = cfg.seed if seed is None else seed
    if n < 1:
        raise InvalidArgumentError("sample count must be >= 1")
    ae, model, sharp = models or load_models(cfg, skip_refine)
    task = model.registry_.get(prompt)
    latents = model.sample(task, n, steps=steps, eta=eta, seed=seed)
    sinos = ae.inverse_transform(latents)
    coarse = fbp_reconstruct(sinos, cfg.geometry_obj(), cfg.image_shape(), half_extent=cfg.half_extent)
    refined = None if skip_refine else sharp.transform(coarse)
    return sinos, coarse, refined


def cmd_sample(cfg, prompt, n=None, steps=None, eta=None, seed=None, skip_refine=False, out_dir=None):
    n = cfg.n_samples if n is None else n
    prompt = normalize_prompt(prompt)
    sinos, coarse, refined = generate(cfg, prompt, n, steps, eta, seed, skip_refine)
    out = Path(out_dir) if out_dir else Path(cfg.out) / "samples" / _slug(prompt)
    arms = {"sinograms": sinos, "coarse": coarse}
    if refined is not None:
        arms["refined"] = refined
    for name, stack in arms.items():
        for i, arr in enumerate(stack):
            write_prot(out / name / f"{i:05d}.prot", arr)
    final = refined if refined is not None else coarse
    for i, img in enumerate(final):
        write_pgm(out / "previews" / f"{i:05d}.pgm", img)
    return out


# -- evaluation -------------------------------------------------------
def load_image_dir(path):
    path = Path(path)
    if not path.is_dir():
        raise InvalidArgumentError(f"not a directory: {path}")
    files = sorted(path.glob("*.prot"))
    if not files:
        raise InvalidArgumentError(f"no PROT images in {path}")
    images = [read_prot(f) for f in files]
    if any(im.ndim != 2 or im.shape != images[0].shape for im in images):
        raise InvalidArgumentError(f"{path} must hold equally sized 2-D images")
    return np.stack(images).astype(np.float64)


def phantom_classifier(extractor, image_size, seed=0, per_class=60):
    """Logistic-regression head over ``extractor`` features, fit on labelled phantoms of every class."""
    feats, labels = [], []
    for k, kind in enumerate(PHANTOM_CLASSES):
        feats.append(extractor(generate_phantoms(PhantomSpec(kind, image_size, seed=seed + 7919), per_class)))
        labels += [k] * per_class
    clf = make_pipeline(StandardScaler(), LogisticRegression(max_iter=5000))
    return clf.fit(np.concatenate(feats), labels)


def metrics_report(real, gen, extractor="frozen-random-conv", kernel="polynomial", seed=0, splits=10,
                   subset_size=None, subsets=10, standard_mmd=False):
    """Report dict from two image stacks, or two feature matrices when ``extractor == 'external'``."""
    kern = Kernel.parse(kernel)
    probs = None
    if extractor == "external":
        fr, fg = np.asarray(real, dtype=np.float64), np.asarray(gen, dtype=np.float64)
    else:
        ext = make_extractor(extractor, seed)
        fr, fg = ext(real), ext(gen)
        size = np.asarray(gen).shape[-1]
        if extractor == "frozen-random-conv" and np.asarray(gen).shape[-2] == size and size >= 32:
            probs = phantom_classifier(ext, size, seed).predict_proba(fg)
    if len(fr) == 0 or len(fg) == 0:
        raise InvalidArgumentError("both sets must be nonempty")
    subset = subset_size or min(len(fr), len(fg), 50)
    kid_mean, kid_std = kid(fr, fg, kern, subset_size=subset, subsets=subsets, rng=seed)
    is_mean, is_std = inception_score_splits(probs, splits) if probs is not None else (None, None)
    report = {
        "fid": fid(fr, fg) if min(len(fr), len(fg)) >= 2 else None,
        "is_mean": is_mean, "is_std": is_std,
        "kid_mean": kid_mean, "kid_std": kid_std,
        "n_real": int(len(fr)), "n_gen": int(len(fg)),
        "extractor": extractor, "kernel": kern.describe(), "seed": int(seed),
        "is_splits": min(splits, len(fg)) if probs is not None else None,
        "is_classes": list(PHANTOM_CLASSES) if probs is not None else None,
        "kid_subset_size": subset, "kid_subsets": subsets,
    }
    if standard_mmd:
        report["mmd2_unbiased_mean"], report["mmd2_unbiased_std"] = kid(
            fr, fg, kern, subset_size=max(subset, 2), subsets=subsets, rng=seed, standard_mmd=True)
    return report


def _write_report(report, out):
    if out:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(report, indent=2))
    return report


def cmd_evaluate(gen_dir, ref_dir, extractor="frozen-random-conv", kernel="polynomial", seed=0, out=None,
                 standard_mmd=False):
    report = metrics_report(load_image_dir(ref_dir), load_image_dir(gen_dir), extractor, kernel, seed,
                            standard_mmd=standard_mmd)
    return _write_report(report, out)


def cmd_metrics(real, gen, extractor="frozen-random-conv", kernel="polynomial", seed=0, out=None,
                standard_mmd=False):
    """Like :func:`cmd_evaluate`, but two PROT feature files are read as precomputed features."""
    real, gen = Path(real), Path(gen)
    if real.is_file() and gen.is_file():
        report = metrics_report(ExternalFeatures(real)(), ExternalFeatures(gen)(), "external", kernel, seed,
                                standard_mmd=standard_mmd)
    else:
        report = metrics_report(load_image_dir(real), load_image_dir(gen), extractor, kernel, seed,
                                standard_mmd=standard_mmd)
    return _write_report(report, out)
