"""Core numerics: seeded random streams, dense float64 linear algebra, stats.

Matrices are plain 2-D float64 numpy arrays in row-major (C) order. All
computation is double precision; persistence may downcast (see checkpoint).
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    """Deterministic random stream over a counter-based generator (Philox).

    The stream is a pure function of the 256-bit key derived from the seed.
    ``split(tag)`` derives an independent child stream from the *key* and the
    tag only, so splits do not depend on how much of the parent stream has
    been consumed.
    """

    def __init__(self, seed: int, _key: bytes | None = None):
        if _key is None:
            _key = hashlib.sha256(b"bnn-rebasin-root:" + str(int(seed)).encode()).digest()
        self._key = _key
        key_words = np.frombuffer(_key[:16], dtype=np.uint64)  # Philox wants 2x64 bits
        self.gen = np.random.Generator(np.random.Philox(key=key_words))

    def split(self, tag: str) -> "Rng":
        key = hashlib.sha256(self._key + b"/" + tag.encode()).digest()
        return Rng(0, _key=key)

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        return self.gen.normal(loc=mean, scale=std, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self.gen.integers(low, high, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.gen.uniform(low, high, size=size)


def as_matrix(a) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense matrix product with explicit shape validation."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def sample_gaussian(rng: Rng, rows: int, cols: int, mean: float = 0.0,
                    std: float = 1.0) -> np.ndarray:
    """i.i.d. normal matrix; std=0 degenerates to a constant matrix."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std == 0.0:
        return np.full((rows, cols), float(mean))
    return rng.normal(size=(rows, cols), mean=mean, std=std)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction (overflow-safe)."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def mean_var_per_coordinate(samples) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate mean and unbiased (K-1) variance over K flat arrays."""
    if len(samples) < 2:
        raise ValueError(f"need >= 2 samples, got {len(samples)}")
    stacked = np.stack([np.asarray(s, dtype=np.float64) for s in samples])
    return stacked.mean(axis=0), stacked.var(axis=0, ddof=1)
