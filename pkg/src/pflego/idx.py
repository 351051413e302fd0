"""Reader for the IDX binary format used by MNIST-style corpora.

Layout (big-endian): a 4-byte magic ``0x00000803`` for images or
``0x00000801`` for labels, one uint32 per dimension, then unsigned bytes.
Files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse(raw: bytes, magic: int, ndim: int, what: str) -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{what} file too short for a magic number", 0)
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{what} file has magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{what} header truncated", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise FormatError(
            f"{what} payload truncated: expected {size} bytes, found {len(raw) - header}", len(raw)
        )
    if len(raw) - header > size:
        raise FormatError(f"{what} file has {len(raw) - header - size} trailing bytes", header + size)
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    """``(count, rows * cols)`` float64 pixels scaled to [0, 1], rows flattened in order."""
    images = _parse(_read_bytes(path), IMAGES_MAGIC, 3, "images")
    return images.reshape(images.shape[0], -1).astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    return _parse(_read_bytes(path), LABELS_MAGIC, 1, "labels").astype(np.int64)


def load_idx(images_path, labels_path, n_classes: int | None = None) -> list[np.ndarray]:
    """Images grouped by label: element ``c`` holds every image of class ``c``."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        # the count field sits right after the magic number
        raise FormatError(f"{len(images)} images but {len(labels)} labels", 4)
    n_classes = n_classes or int(labels.max()) + 1
    return [images[labels == c] for c in range(n_classes)]


def write_idx(path, array: np.ndarray) -> None:
    """Write a uint8 array as IDX; 1-D arrays become label files, 3-D ones image files."""
    array = np.asarray(array, dtype=np.uint8)
    magic = {1: LABELS_MAGIC, 3: IMAGES_MAGIC}.get(array.ndim)
    if magic is None:
        raise ValueError("only 1-D label and 3-D image arrays are supported")
    header = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    Path(path).write_bytes(header + array.tobytes())
