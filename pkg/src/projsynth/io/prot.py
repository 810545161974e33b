"""PROT tensor files.

Layout: ``b"PROT"``, version ``u8 = 1``, dtype ``u8`` (1 = float32 LE),
rank ``u16 LE``, ``rank`` dims as ``u32 LE``, then the row-major payload.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"PROT"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sBBH")


def encode_prot(array):
    arr = np.asarray(array, dtype="<f4", order="C")
    if any(d >= 2**32 for d in arr.shape) or arr.ndim >= 2**16:
        raise FormatError("tensor too large for PROT header")
    head = _HEADER.pack(MAGIC, VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + dims + arr.tobytes()


def decode_prot(data):
    if len(data) < _HEADER.size:
        raise FormatError("truncated PROT header")
    magic, version, dtype, rank = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported PROT version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported PROT dtype code {dtype}")
    off = _HEADER.size
    if len(data) < off + 4 * rank:
        raise FormatError("truncated PROT dims")
    shape = struct.unpack_from(f"<{rank}I", data, off)
    off += 4 * rank
    count = int(np.prod(shape, dtype=np.int64))
    if len(data) != off + 4 * count:
        raise FormatError(f"payload holds {len(data) - off} bytes, expected {4 * count}")
    return np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)


def write_prot(path, array):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_prot(array))
    return path


def read_prot(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return decode_prot(data)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
