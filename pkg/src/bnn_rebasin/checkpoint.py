"""Bit-exact binary checkpoints for weights, sample sets, and summaries.

Layout (all integers little-endian):

    magic "BNC1"
    u32 tensor count
    per tensor: u16 name length | name bytes (utf-8) | u8 ndims |
                u32 dims... | float32 data, row-major, little-endian
    u32 meta length | meta JSON bytes (utf-8)

Tensors are stored as float32; in-memory Checkpoint objects hold float32 so
write -> read round-trips bit-exactly. Compute code upcasts to float64.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError
from .inference import SampleSet, ViPosterior
from .model import WeightSet
from .posterior import DiagGaussian

MAGIC = b"BNC1"


@dataclass
class Checkpoint:
    tensors: list  # of (name, float32 ndarray); names unique, order preserved
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [name for name, _ in self.tensors]
        if len(set(names)) != len(names):
            raise ValueError("duplicate tensor names")
        self.tensors = [(name, np.ascontiguousarray(arr, dtype=np.float32))
                        for name, arr in self.tensors]

    def tensor(self, name: str) -> np.ndarray:
        for n, arr in self.tensors:
            if n == name:
                return arr
        raise KeyError(name)

    def names(self) -> list:
        return [name for name, _ in self.tensors]


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_checkpoint(path: str, ckpt: Checkpoint) -> None:
    parts = [MAGIC, struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors:
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError("too many dimensions")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4", copy=False).tobytes(order="C"))
    meta_bytes = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)
    atomic_write_bytes(path, b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path: str):
        self.raw = raw
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.raw):
            raise DataFormatError(
                f"{self.path}: truncated {what} at byte {self.off} "
                f"(need {n}, have {len(self.raw) - self.off})")
        out = self.raw[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        raw = f.read()
    r = _Reader(raw, path)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r} at byte 0")
    (count,) = r.unpack("<I", "tensor count")
    tensors = []
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        (ndims,) = r.unpack("<B", "ndims")
        dims = r.unpack(f"<{ndims}I", "dims") if ndims else ()
        n_values = int(np.prod(dims, dtype=np.int64)) if ndims else 1
        data = r.take(4 * n_values, f"tensor {name!r} data")
        arr = np.frombuffer(data, dtype="<f4").reshape(dims).copy()
        tensors.append((name, arr))
    (meta_len,) = r.unpack("<I", "meta length")
    meta_bytes = r.take(meta_len, "meta")
    if r.off != len(raw):
        raise DataFormatError(
            f"{path}: {len(raw) - r.off} trailing bytes at byte {r.off}")
    try:
        meta = json.loads(meta_bytes.decode("utf-8")) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: bad meta JSON: {e}") from e
    return Checkpoint(tensors, meta)


# ---------------------------------------------------------------------------
# Typed conversions
# ---------------------------------------------------------------------------

def weights_to_checkpoint(w: WeightSet, meta: dict | None = None) -> Checkpoint:
    m = {"kind": "weights"}
    m.update(meta or {})
    return Checkpoint([("w1", w.w1), ("b1", w.b1), ("w2", w.w2), ("b2", w.b2)], m)


def checkpoint_to_weights(c: Checkpoint) -> WeightSet:
    try:
        return WeightSet(*(c.tensor(n).astype(np.float64)
                           for n in ("w1", "b1", "w2", "b2")))
    except KeyError as e:
        raise DataFormatError(f"checkpoint is missing tensor {e}") from e


def sampleset_to_checkpoint(s: SampleSet, meta: dict | None = None) -> Checkpoint:
    tensors = []
    for i, w in enumerate(s.samples):
        prefix = f"sample_{i:04d}."
        tensors += [(prefix + "w1", w.w1), (prefix + "b1", w.b1),
                    (prefix + "w2", w.w2), (prefix + "b2", w.b2)]
    m = {"kind": "samples", "method": s.method, "n_samples": len(s)}
    m.update(s.meta)
    m.update(meta or {})
    return Checkpoint(tensors, m)


def checkpoint_to_sampleset(c: Checkpoint) -> SampleSet:
    n = c.meta.get("n_samples")
    if n is None:
        raise DataFormatError("checkpoint meta lacks n_samples")
    samples = []
    for i in range(n):
        prefix = f"sample_{i:04d}."
        try:
            samples.append(WeightSet(*(c.tensor(prefix + t).astype(np.float64)
                                       for t in ("w1", "b1", "w2", "b2"))))
        except KeyError as e:
            raise DataFormatError(f"checkpoint is missing tensor {e}") from e
    meta = {k: v for k, v in c.meta.items()
            if k not in ("kind", "method", "n_samples")}
    return SampleSet(samples, c.meta.get("method", "unknown"), meta)


def vi_to_checkpoint(q: ViPosterior, meta: dict | None = None) -> Checkpoint:
    m = {"kind": "vi_posterior", "hidden_size": q.hidden_size,
         "in_dim": q.in_dim, "out_dim": q.out_dim}
    m.update(meta or {})
    return Checkpoint([("mu", q.mu), ("rho", q.rho)], m)


def checkpoint_to_vi(c: Checkpoint) -> ViPosterior:
    try:
        return ViPosterior(c.tensor("mu").astype(np.float64),
                           c.tensor("rho").astype(np.float64),
                           int(c.meta["hidden_size"]), int(c.meta["in_dim"]),
                           int(c.meta["out_dim"]))
    except KeyError as e:
        raise DataFormatError(f"checkpoint is missing {e}") from e


def gaussian_to_checkpoint(g: DiagGaussian, meta: dict | None = None) -> Checkpoint:
    m = {"kind": "diag_gaussian", "tag": g.tag, "source_method": g.source_method,
         "hidden_size": g.hidden_size, "in_dim": g.in_dim, "out_dim": g.out_dim,
         "reference_id": g.reference_id}
    m.update(meta or {})
    return Checkpoint([("mu", g.mu), ("sigma2", g.sigma2)], m)


def checkpoint_to_gaussian(c: Checkpoint) -> DiagGaussian:
    try:
        return DiagGaussian(c.tensor("mu").astype(np.float64),
                            c.tensor("sigma2").astype(np.float64),
                            c.meta["tag"], c.meta.get("source_method", "unknown"),
                            int(c.meta["hidden_size"]), int(c.meta["in_dim"]),
                            int(c.meta["out_dim"]), c.meta.get("reference_id"))
    except KeyError as e:
        raise DataFormatError(f"checkpoint is missing {e}") from e
