"""Minimal reader for the MNIST IDX files (optionally gzip-compressed)."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _open(path: Path):
    if path.exists():
        return open(path, "rb")
    gz = path.with_name(path.name + ".gz")
    if gz.exists():
        return gzip.open(gz, "rb")
    raise FileNotFoundError(path)


def read_idx(path) -> np.ndarray:
    """Parse one IDX file: big-endian magic, dimension sizes, then raw uint8 data."""
    with _open(Path(path)) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (IMAGES_MAGIC, LABELS_MAGIC):
        raise ValueError(f"{path}: bad magic {magic:#010x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    body = np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim)
    if body.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {np.prod(dims)} bytes of data, found {body.size}")
    return body.reshape(dims)


def load_mnist(directory, split="train"):
    """(features in [0, 1] flattened to 784 columns, integer labels)."""
    img_name, lab_name = FILES[split]
    d = Path(directory)
    images = read_idx(d / img_name)
    labels = read_idx(d / lab_name)
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image and label counts differ")
    return images.reshape(len(images), -1).astype(np.float64) / 255.0, labels.astype(np.int64)


def write_idx(path, array: np.ndarray):
    """Write a uint8 array in IDX format (used to build small fixtures)."""
    array = np.asarray(array, dtype=np.uint8)
    magic = IMAGES_MAGIC if array.ndim == 3 else LABELS_MAGIC
    if array.ndim not in (1, 3):
        raise ValueError("only 1-d label and 3-d image arrays are supported")
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())
