"""Desk-scale end-to-end run shared by the acceptance tests.

Two prompts, 400 phantoms each at 64x64, 64-view x 64-detector sinograms,
T = 1000, 72 sampling steps at eta = 1.0. Reference sets for the metrics
are phantoms drawn from a seed the training data never used.
"""

import os
import shutil
import time
from pathlib import Path

import numpy as np

from projsynth.ct import forward_project
from projsynth.metrics import FrozenRandomConv, centroid_accuracy
from projsynth.pipeline import RunConfig, cmd_build_dataset, cmd_train, generate, load_models, metrics_report
from projsynth.phantoms import PhantomSpec, generate_phantoms

PROMPTS = ("disks", "bars")
N_GEN = 100
N_REF = 200
HELD_OUT_SEED = 9001

DESK = {
    "seed": 0, "prompts": list(PROMPTS), "image_size": 64, "phantoms_per_prompt": 400, "views": 64,
    "detectors": 64, "steps": 72, "eta": 1.0,
    "autoencoder": {"base_channels": 16, "num_res_blocks": 1, "epochs": 30, "codebook_size": 1024},
    "diffusion": {"optimizer": "adamw", "lr": 1e-3, "steps": 8000, "batch_size": 32, "base_channels": 32,
                  "channel_mult": [1, 2, 2], "num_res_blocks": 1, "ema_decay": 0.999},
    "sharpnet": {"lr": 1e-3, "epochs": 30},
}


def desk_config(root, factor):
    return RunConfig.from_dict({**DESK, "factor": factor, "dataset": str(Path(root) / "data"),
                                "out": str(Path(root) / f"run_f{factor}")})


def held_out(cfg):
    images = {p: generate_phantoms(PhantomSpec(p, cfg.image_size, seed=HELD_OUT_SEED), N_REF) for p in PROMPTS}
    sinos = {p: forward_project(images[p], cfg.geometry_obj(), cfg.half_extent) for p in PROMPTS}
    return images, sinos


def run_factor(root, factor, log=print):
    """Build (once), train (resuming) and sample both prompts; returns timings and arrays."""
    cfg = desk_config(root, factor)
    start = time.time()
    if not (Path(cfg.dataset) / "index.json").exists():
        cmd_build_dataset(cfg)
    other = Path(root) / f"run_f{12 - factor}" / "sharpnet"
    mine = Path(cfg.out) / "sharpnet"
    if other.exists() and not mine.exists():
        # SharpNet works on images and does not depend on the latent factor
        shutil.copytree(other, mine)
    cmd_train(cfg, log=log)
    trained = time.time()
    models = load_models(cfg)
    samples = {}
    for p in PROMPTS:
        sinos, coarse, refined = generate(cfg, p, N_GEN, models=models)
        samples[p] = {"sinograms": sinos, "coarse": coarse, "refined": refined}
    done = time.time()
    return {"config": cfg, "samples": samples, "train_seconds": trained - start, "sample_seconds": done - trained}


def evaluate(result, ref_images, ref_sinos, seed=0):
    """All numbers the end-to-end criteria need."""
    gen = result["samples"]
    noise = np.random.default_rng(seed).random((N_GEN, *ref_images[PROMPTS[0]].shape[1:]))
    out = {"reports": {}, "fid": {}}
    for p in PROMPTS:
        for q in PROMPTS:
            rep = metrics_report(ref_images[q], gen[p]["refined"], seed=seed)
            out["reports"][f"{p}->{q}"] = rep
            out["fid"][(p, q, "refined")] = rep["fid"]
            out["fid"][(p, q, "coarse")] = metrics_report(ref_images[q], gen[p]["coarse"], seed=seed)["fid"]
        out["fid"][("noise", p)] = metrics_report(ref_images[p], noise, seed=seed)["fid"]
    ext = FrozenRandomConv(seed)
    train_x = np.concatenate([ext(ref_sinos[p]) for p in PROMPTS])
    train_y = np.repeat(np.arange(len(PROMPTS)), N_REF)
    test_x = np.concatenate([ext(gen[p]["sinograms"]) for p in PROMPTS])
    test_y = np.repeat(np.arange(len(PROMPTS)), N_GEN)
    out["centroid_accuracy"] = centroid_accuracy(train_x, train_y, test_x, test_y, standardize=True)
    out["centroid_accuracy_real"] = centroid_accuracy(train_x[::2], train_y[::2], train_x[1::2], train_y[1::2],
                                                     standardize=True)
    return out


def desk_root(tmp_factory):
    env = os.environ.get("PROJSYNTH_DESK_DIR")
    if env:
        Path(env).mkdir(parents=True, exist_ok=True)
        return Path(env)
    return tmp_factory.mktemp("desk")
