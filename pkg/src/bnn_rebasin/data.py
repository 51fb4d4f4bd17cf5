"""Datasets: IDX (MNIST-format) ingestion, subsetting, batching, synthetic data.

Images are N x D float64 matrices with pixels in [0, 1]; labels are int64
class indices. The IDX reader follows the published big-endian layout
(magic, dims, raw uint8 payload).
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError
from .numerics import Rng

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class Dataset:
    images: np.ndarray  # (N, D) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    name: str = "dataset"
    num_classes: int = 10

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2:
            raise ValueError(f"images must be 2-D, got shape {self.images.shape}")
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range")

    @property
    def size(self) -> int:
        return self.images.shape[0]

    @property
    def dim(self) -> int:
        return self.images.shape[1]


def _open_maybe_gz(path):
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path: str, expected_magic: int) -> np.ndarray:
    with _open_maybe_gz(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header at byte {len(raw)}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: bad magic 0x{magic:08x} at byte 0 (expected 0x{expected_magic:08x})")
    ndims = magic & 0xFF
    header_len = 4 + 4 * ndims
    if len(raw) < header_len:
        raise DataFormatError(f"{path}: truncated dimension header at byte {len(raw)}")
    dims = struct.unpack(f">{ndims}I", raw[4:header_len])
    n_values = int(np.prod(dims, dtype=np.int64))
    if len(raw) < header_len + n_values:
        raise DataFormatError(
            f"{path}: expected {n_values} payload bytes, file ends at byte {len(raw)}")
    data = np.frombuffer(raw, dtype=np.uint8, count=n_values, offset=header_len)
    return data.reshape(dims)


def load_idx(images_path: str, labels_path: str, name: str = "idx") -> Dataset:
    """Load an image/label IDX file pair; pixels scaled into [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGE_MAGIC)
    labels = _read_idx(labels_path, IDX_LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels")
    n = images.shape[0]
    flat = images.reshape(n, -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64), name=name)


def write_idx(images_path: str, labels_path: str, images: np.ndarray,
              labels: np.ndarray) -> None:
    """Write a uint8 image stack (N, R, C) and labels (N,) as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, r, c = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, r, c))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())


def load_mnist_dir(data_dir: str) -> tuple[Dataset, Dataset]:
    """Load the four conventionally named MNIST files from a directory."""
    paths = {}
    for key, base in MNIST_FILES.items():
        path = os.path.join(data_dir, base)
        if not os.path.exists(path) and os.path.exists(path + ".gz"):
            path += ".gz"
        if not os.path.exists(path):
            raise DataFormatError(f"missing data file: {path}")
        paths[key] = path
    train = load_idx(paths["train_images"], paths["train_labels"], name="mnist-train")
    test = load_idx(paths["test_images"], paths["test_labels"], name="mnist-test")
    return train, test


def subset(d: Dataset, n: int, rng: Rng) -> Dataset:
    """n rows sampled without replacement, seeded-deterministic."""
    if n > d.size:
        raise ValueError(f"subset size {n} exceeds dataset size {d.size}")
    idx = rng.permutation(d.size)[:n]
    return Dataset(d.images[idx], d.labels[idx], name=f"{d.name}-sub{n}",
                   num_classes=d.num_classes)


def batches(d: Dataset, batch_size: int, rng: Rng):
    """One epoch: a seeded shuffle split into batches (last may be short)."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(d.size)
    for start in range(0, d.size, batch_size):
        idx = order[start:start + batch_size]
        yield d.images[idx], d.labels[idx]


def synthetic_blobs(classes: int, per_class: int, dim: int, rng: Rng,
                    std: float = 0.08) -> Dataset:
    """Gaussian class clusters clamped to [0, 1]; separable for small std."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    centroids = rng.uniform(0.15, 0.85, size=(classes, dim))
    images = np.empty((classes * per_class, dim))
    labels = np.empty(classes * per_class, dtype=np.int64)
    for c in range(classes):
        lo = c * per_class
        block = centroids[c] + rng.normal(size=(per_class, dim), std=std)
        images[lo:lo + per_class] = block
        labels[lo:lo + per_class] = c
    np.clip(images, 0.0, 1.0, out=images)
    order = rng.permutation(classes * per_class)
    return Dataset(images[order], labels[order], name="blobs", num_classes=classes)


def synthetic_mnist_like(n_train: int, n_test: int, rng: Rng, classes: int = 10,
                         dim: int = 784, prototypes_per_class: int = 8,
                         active_pixels: int = 40, noise: float = 0.25,
                         label_noise: float = 0.03) -> tuple[Dataset, Dataset]:
    """MNIST-scale stand-in: sparse multi-prototype patterns per class.

    Each class owns a few prototype images that are dark except for a small
    random set of bright pixels; samples are noisy clamped copies. Multiple
    prototypes per class make the decision regions non-convex and a little
    train-label noise forces memorization, so independently trained networks
    land in genuinely different optima with a real loss barrier between
    them. Label noise is applied to the train split only.
    """
    protos = np.zeros((classes, prototypes_per_class, dim))
    for c in range(classes):
        for p in range(prototypes_per_class):
            on = rng.permutation(dim)[:active_pixels]
            protos[c, p, on] = rng.uniform(0.55, 1.0, size=active_pixels)

    def draw(n, tag, flip):
        labels = rng.integers(0, classes, size=n)
        which = rng.integers(0, prototypes_per_class, size=n)
        images = protos[labels, which] + rng.normal(size=(n, dim), std=noise)
        np.clip(images, 0.0, 1.0, out=images)
        if flip > 0:
            n_flip = int(round(flip * n))
            idx = rng.permutation(n)[:n_flip]
            labels = labels.copy()
            labels[idx] = rng.integers(0, classes, size=n_flip)
        return Dataset(images, labels, name=f"synthetic-{tag}", num_classes=classes)

    return draw(n_train, "train", label_noise), draw(n_test, "test", 0.0)
