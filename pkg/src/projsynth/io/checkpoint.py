"""Checkpoint directories: ``manifest.json`` plus one PROT file per tensor."""

import datetime as _dt
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .prot import read_prot, write_prot

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


def config_hash(config):
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _created():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return when.replace(microsecond=0).isoformat()


def _file_name(name, used):
    base = re.sub(r"[^A-Za-z0-9_.-]+", "_", name) or "tensor"
    candidate, k = base, 1
    while candidate in used:
        candidate = f"{base}_{k}"
        k += 1
    used.add(candidate)
    return candidate + ".prot"


@dataclass
class Checkpoint:
    stage: str
    config: dict
    tensors: dict = field(default_factory=dict)
    seed: int = 0
    created: str = None

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        used, index = set(), []
        for name, value in self.tensors.items():
            fname = _file_name(name, used)
            arr = np.asarray(value, dtype=np.float32)
            write_prot(directory / fname, arr)
            index.append({"name": name, "shape": list(arr.shape), "file": fname})
        manifest = {
            "stage": self.stage,
            "version": FORMAT_VERSION,
            "config": self.config,
            "tensors": index,
            "seed": int(self.seed),
            "created": self.created or _created(),
        }
        (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory, stage=None):
        directory = Path(directory)
        path = directory / MANIFEST
        if not path.exists():
            raise FormatError(f"no checkpoint manifest at {path}")
        manifest = json.loads(path.read_text())
        for key in ("stage", "version", "config", "tensors", "seed", "created"):
            if key not in manifest:
                raise FormatError(f"{path}: manifest missing key {key!r}")
        if manifest["version"] != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {manifest['version']}")
        if stage is not None and manifest["stage"] != stage:
            raise FormatError(f"{path}: expected stage {stage!r}, found {manifest['stage']!r}")
        tensors = {}
        for entry in manifest["tensors"]:
            arr = read_prot(directory / entry["file"])
            if list(arr.shape) != list(entry["shape"]):
                raise FormatError(f"{directory / entry['file']}: shape {arr.shape} != manifest {entry['shape']}")
            tensors[entry["name"]] = arr
        return cls(manifest["stage"], manifest["config"], tensors, manifest["seed"], manifest["created"])

    @staticmethod
    def exists(directory):
        return (Path(directory) / MANIFEST).exists()
