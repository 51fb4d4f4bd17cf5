"""Compact diagonal-Gaussian posterior summaries, cross-method merging, pruning.

A summary holds a per-parameter mean and variance. "direct" summaries are
fitted on raw samples; "rebasin" summaries align every sample to sample 0
first, which removes the hidden-unit relabeling freedom before the moments
are taken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .inference import SampleSet, ViPosterior
from .model import WeightSet
from .numerics import Rng, mean_var_per_coordinate
from .permutation import apply_to_weights
from .rebasin import align_sample_set, match

TAGS = ("direct", "rebasin", "vi")


@dataclass
class DiagGaussian:
    mu: np.ndarray
    sigma2: np.ndarray
    tag: str  # direct | rebasin | vi
    source_method: str
    hidden_size: int
    in_dim: int
    out_dim: int
    reference_id: int | None = None  # alignment reference (rebasin only)

    def __post_init__(self):
        self.mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        self.sigma2 = np.ascontiguousarray(self.sigma2, dtype=np.float64)
        if self.mu.shape != self.sigma2.shape:
            raise ValueError("mu and sigma2 lengths differ")
        if self.sigma2.size and self.sigma2.min() < 0:
            raise ValueError("negative variance")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")

    @property
    def n_params(self) -> int:
        return self.mu.size

    def mean_weights(self) -> WeightSet:
        return WeightSet.from_flat(self.mu, self.hidden_size, self.in_dim,
                                   self.out_dim)

    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma2)


def _arch(s: SampleSet) -> tuple[int, int, int]:
    w = s.samples[0]
    return w.hidden_size, w.in_dim, w.out_dim


def fit_direct(s: SampleSet) -> DiagGaussian:
    """Per-coordinate mean and unbiased variance over the raw samples."""
    if len(s) < 2:
        raise ValueError(f"need >= 2 samples to fit, got {len(s)}")
    mu, sigma2 = mean_var_per_coordinate(s.flats())
    h, din, dout = _arch(s)
    return DiagGaussian(mu, sigma2, "direct", s.method, h, din, dout)


def fit_rebasin(s: SampleSet, method: str = "activation",
                probe: Dataset | None = None) -> DiagGaussian:
    """Moments after aligning every sample to sample 0."""
    if len(s) < 2:
        raise ValueError(f"need >= 2 samples to fit, got {len(s)}")
    aligned = align_sample_set(s, method=method, probe=probe)
    mu, sigma2 = mean_var_per_coordinate(aligned.flats())
    h, din, dout = _arch(s)
    return DiagGaussian(mu, sigma2, "rebasin", s.method, h, din, dout,
                        reference_id=0)


def from_vi(q: ViPosterior) -> DiagGaussian:
    """House a fitted variational posterior in the same summary format."""
    return DiagGaussian(q.mu.copy(), q.sigma ** 2, "vi", "vi", q.hidden_size,
                        q.in_dim, q.out_dim)


def draw(g: DiagGaussian, k: int, seed: int) -> SampleSet:
    """k independent draws from N(mu, diag(sigma2))."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = Rng(seed).split("summary-draws")
    sigma = g.sigma()
    samples = []
    for _ in range(k):
        flat = g.mu + sigma * rng.normal(size=g.mu.size)
        samples.append(WeightSet.from_flat(flat, g.hidden_size, g.in_dim,
                                           g.out_dim))
    return SampleSet(samples, f"{g.source_method}-{g.tag}-draws",
                     {"seed": seed, "k": k})


def merge(mu_from: DiagGaussian, sigma_from: DiagGaussian,
          method: str = "weight", probe: Dataset | None = None) -> DiagGaussian:
    """Stitch means from one summary with variances from another.

    The two summaries generally live in different basins, so sigma_from's
    mean network is first matched to mu_from's mean network and the
    resulting unit relabeling is applied to sigma_from's variances; without
    that step the variance of one model would be attached to an unrelated
    coordinate of the other.
    """
    if mu_from.n_params != sigma_from.n_params:
        raise ValueError("summaries have different parameter counts")
    if mu_from.tag != "rebasin" or sigma_from.tag != "rebasin":
        raise ValueError("merge expects rebasin-aligned summaries")
    rep = match(mu_from.mean_weights(), sigma_from.mean_weights(),
                method=method, probe=probe)
    sigma2_ws = WeightSet.from_flat(sigma_from.sigma2, sigma_from.hidden_size,
                                    sigma_from.in_dim, sigma_from.out_dim)
    sigma2_aligned = apply_to_weights(rep.permutation, sigma2_ws).flatten()
    return DiagGaussian(mu_from.mu.copy(), sigma2_aligned, "rebasin",
                        f"{mu_from.source_method}+{sigma_from.source_method}",
                        mu_from.hidden_size, mu_from.in_dim, mu_from.out_dim,
                        reference_id=mu_from.reference_id)


def prune(g: DiagGaussian, retain_fraction: float,
          include_biases: bool = True) -> WeightSet:
    """Keep the retain_fraction of coordinates with lowest variance at their
    mean values; zero the rest. Ties resolve by coordinate index.

    With include_biases=False the bias coordinates are left at their means
    and only weight-matrix coordinates compete for retention.
    """
    if not 0.0 < retain_fraction <= 1.0:
        raise ValueError(f"retain_fraction must be in (0, 1], got {retain_fraction}")
    m = g.n_params
    h, din, dout = g.hidden_size, g.in_dim, g.out_dim
    prunable = np.ones(m, dtype=bool)
    if not include_biases:
        o1 = h * din
        o3 = o1 + h + dout * h
        prunable[o1:o1 + h] = False
        prunable[o3:] = False
    candidates = np.flatnonzero(prunable)
    n_keep = int(round(retain_fraction * candidates.size))
    order = candidates[np.argsort(g.sigma2[candidates], kind="stable")]
    keep = np.zeros(m, dtype=bool)
    keep[order[:n_keep]] = True
    keep[~prunable] = True
    flat = np.where(keep, g.mu, 0.0)
    return WeightSet.from_flat(flat, h, din, dout)
