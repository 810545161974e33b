import csv
from pathlib import Path

import numpy as np


def to_uint8(image, low=0.0, high=1.0):
    scaled = (np.clip(np.asarray(image, dtype=np.float64), low, high) - low) / (high - low)
    return np.round(scaled * 255.0).astype(np.uint8)


def write_pgm(path, image, low=0.0, high=1.0):
    """Binary 8-bit PGM of ``image`` windowed to ``[low, high]``."""
    pixels = to_uint8(image, low, high)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode()
    path.write_bytes(header + pixels.tobytes())
    return path


def read_pgm(path):
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    width, height = int(fields[1]), int(fields[2])
    # exactly one whitespace byte separates the header from the raster
    return np.frombuffer(data[pos + 1: pos + 1 + width * height], dtype=np.uint8).reshape(height, width)


def write_loss_log(path, losses):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(losses):
            writer.writerow([step, repr(float(loss))])
    return path


def read_loss_log(path):
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["loss"]) for r in rows]
