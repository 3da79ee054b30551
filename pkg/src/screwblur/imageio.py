"""Image files: 8-bit sRGB PNG and an exact float32 sidecar.

The sidecar layout is little-endian: the 4-byte magic ``SBF1``, a uint32 rank,
one uint32 per dimension, then row-major float32 values.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

FLOAT_MAGIC = b"SBF1"


class ImageFormatError(ValueError):
    pass


def srgb_to_linear(s):
    s = np.asarray(s, dtype=np.float64)
    return np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(np.maximum(x, 0.0031308), 1.0 / 2.4) - 0.055)


def save_png(path, linear_rgb) -> None:
    """Write a linear-RGB float image (H, W, 3) or grayscale (H, W) as sRGB PNG."""
    img = np.clip(linear_to_srgb(np.clip(linear_rgb, 0.0, 1.0)), 0.0, 1.0)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(Path(path))


def load_png(path) -> np.ndarray:
    """Read an sRGB PNG as linear-RGB float64 (H, W, 3)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return srgb_to_linear(arr)


def save_float(path, arr) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FLOAT_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_float(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    data = path.read_bytes()
    if data[:4] != FLOAT_MAGIC:
        raise ImageFormatError(f"{path}: bad magic {data[:4]!r}")
    (ndim,) = struct.unpack_from("<I", data, 4)
    shape = struct.unpack_from(f"<{ndim}I", data, 8)
    offset = 8 + 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(data) - offset != 4 * count:
        raise ImageFormatError(f"{path}: expected {count} floats, found {(len(data) - offset) // 4}")
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(shape).astype(np.float64)
