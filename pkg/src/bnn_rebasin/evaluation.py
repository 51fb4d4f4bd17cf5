"""Predictive comparison metrics, interpolation geometry, summary evaluation.

Everything here produces plain numbers or rows ready for CSV emission; no
plotting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .inference import SampleSet, ViPosterior, train_map, vi_draws
from .model import (ModelConfig, WeightSet, accuracy, forward, init_weights,
                    mean_cross_entropy)
from .numerics import Rng, softmax_rows
from .permutation import apply_to_weights, random_with_not
from .posterior import DiagGaussian, draw, fit_direct, fit_rebasin, prune
from .rebasin import match


@dataclass
class PredictiveTable:
    probs: np.ndarray  # (N_test, classes), rows sum to 1
    source: str
    n_mc: int

    def __post_init__(self):
        self.probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("probs must be 2-D")

    def accuracy(self, labels: np.ndarray) -> float:
        return float((self.probs.argmax(axis=1) == labels).mean())


@dataclass
class InterpolationCurve:
    lambdas: np.ndarray
    losses: np.ndarray
    accuracies: np.ndarray
    nots: np.ndarray


def predictive_from_samples(s: SampleSet, d: Dataset) -> PredictiveTable:
    """Bayesian model average: mean of per-sample softmax tables."""
    acc = np.zeros((d.size, d.num_classes))
    for w in s.samples:
        _, logits = forward(w, d.images)
        acc += softmax_rows(logits)
    acc /= len(s)
    return PredictiveTable(acc, s.method, len(s))


def predictive_from_weights(w: WeightSet, d: Dataset, source: str = "point",
                            ) -> PredictiveTable:
    _, logits = forward(w, d.images)
    return PredictiveTable(softmax_rows(logits), source, 1)


def agreement(p: PredictiveTable, q: PredictiveTable) -> float:
    """Fraction of test inputs on which the argmax classes coincide."""
    if p.probs.shape != q.probs.shape:
        raise ValueError(f"table shapes differ: {p.probs.shape} vs {q.probs.shape}")
    return float((p.probs.argmax(axis=1) == q.probs.argmax(axis=1)).mean())


def total_variation(p: PredictiveTable, q: PredictiveTable) -> float:
    """Mean over inputs of half the L1 distance between class distributions."""
    if p.probs.shape != q.probs.shape:
        raise ValueError(f"table shapes differ: {p.probs.shape} vs {q.probs.shape}")
    return float(0.5 * np.abs(p.probs - q.probs).sum(axis=1).mean())


def interpolate(w0: WeightSet, w1: WeightSet, lambdas) -> list[WeightSet]:
    """Elementwise (1 - lam) * w0 + lam * w1 for each lam."""
    if not w0.same_architecture(w1):
        raise ValueError("architecture mismatch")
    f0, f1 = w0.flatten(), w1.flatten()
    out = []
    for lam in np.asarray(lambdas, dtype=np.float64):
        if lam == 0.0:
            out.append(w0.copy())
        elif lam == 1.0:
            out.append(w1.copy())
        else:
            out.append(WeightSet.from_flat((1.0 - lam) * f0 + lam * f1,
                                           w0.hidden_size, w0.in_dim, w0.out_dim))
    return out


def barrier(w0: WeightSet, w1: WeightSet, d: Dataset, grid: int = 25) -> float:
    """Max mean cross-entropy along the linear path minus the endpoint average."""
    if grid < 3:
        raise ValueError(f"grid must have >= 3 points, got {grid}")
    lambdas = np.linspace(0.0, 1.0, grid)
    losses = [mean_cross_entropy(w, d) for w in interpolate(w0, w1, lambdas)]
    return float(max(losses) - 0.5 * (losses[0] + losses[-1]))


def not_along_path(w0: WeightSet, w1: WeightSet, d: Dataset, lambdas,
                   match_method: str = "weight", probe: Dataset | None = None,
                   ) -> InterpolationCurve:
    """Loss, accuracy, and alignment size of each interpolant matched to w0."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    losses, accs, nots = [], [], []
    for w in interpolate(w0, w1, lambdas):
        rep = match(w0, w, method=match_method, probe=probe)
        nots.append(rep.not_count)
        losses.append(mean_cross_entropy(w, d))
        accs.append(accuracy(w, d))
    return InterpolationCurve(lambdas, np.array(losses), np.array(accs),
                              np.array(nots, dtype=np.int64))


def not_stability_experiment(d_train: Dataset, cfg: ModelConfig, not_values,
                             epochs: int, lr: float, seed: int,
                             batch_size: int = 128,
                             match_method: str = "weight",
                             probe: Dataset | None = None,
                             barrier_grid: int = 25,
                             d_eval: Dataset | None = None) -> list[dict]:
    """Train pairs initialized a controlled relabeling apart and report how
    the transposition count survives training.

    For each k: initialize w_a, set w_b by relabeling w_a's hidden units
    with exactly k transpositions, train both with different minibatch
    streams, match the trained pair, and record the recovered count, the
    post-match l2 distance, and the pre-match barrier.
    """
    if d_eval is None:
        d_eval = d_train
    root = Rng(seed)
    rows = []
    for k in not_values:
        if not 0 <= k <= cfg.hidden_size - 1:
            raise ValueError(f"requested count {k} out of range for H={cfg.hidden_size}")
        pair_rng = root.split(f"pair-{k}")
        w_init = init_weights(cfg, d_train.dim, d_train.num_classes,
                              pair_rng.split("init"))
        p = random_with_not(cfg.hidden_size, int(k), pair_rng.split("perm"))
        w_a = train_map(d_train, cfg, epochs, lr, batch_size=batch_size,
                        rng=pair_rng.split("train-a"), init=w_init)
        w_b = train_map(d_train, cfg, epochs, lr, batch_size=batch_size,
                        rng=pair_rng.split("train-b"),
                        init=apply_to_weights(p, w_init))
        rep = match(w_a, w_b, method=match_method, probe=probe)
        rows.append({
            "seed": seed,
            "not_init": int(k),
            "not_trained": rep.not_count,
            "l2_after_match": rep.l2_after,
            "barrier": barrier(w_a, w_b, d_eval, grid=barrier_grid),
        })
    return rows


def sigma_histogram(g: DiagGaussian, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of per-parameter standard deviations over [0, max sigma]."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    sigma = g.sigma()
    hi = float(sigma.max()) if sigma.size and sigma.max() > 0 else 1.0
    counts, edges = np.histogram(sigma, bins=bins, range=(0.0, hi))
    return edges, counts


def mean_sample_accuracy(s: SampleSet, d: Dataset) -> float:
    return float(np.mean([accuracy(w, d) for w in s.samples]))


@dataclass
class MethodSummaries:
    raw: SampleSet
    q_direct: DiagGaussian
    q_rebasin: DiagGaussian


def summarize_method(s: SampleSet, match_method: str = "activation",
                     probe: Dataset | None = None) -> MethodSummaries:
    return MethodSummaries(s, fit_direct(s),
                           fit_rebasin(s, method=match_method, probe=probe))


def _child_seed(seed: int, label: str) -> int:
    return int(Rng(seed).split(label).integers(0, 2 ** 31))


def table1_rows(hmc: MethodSummaries, ensemble: MethodSummaries,
                vi: ViPosterior, d_test: Dataset, seed: int,
                n_parametric_draws: int = 100) -> list[dict]:
    """Agreement/TV against the raw HMC predictive plus accuracies, one row
    per method and representation. Empty strings mark inapplicable cells."""
    baseline = predictive_from_samples(hmc.raw, d_test)

    def metrics(table, sample_set, mu_net):
        return {
            "agreement": agreement(table, baseline),
            "tv": total_variation(table, baseline),
            "acc_samples": (mean_sample_accuracy(sample_set, d_test)
                            if sample_set is not None else ""),
            "acc_mean": (accuracy(mu_net, d_test) if mu_net is not None else ""),
        }

    rows = []
    for name, summaries in (("hmc", hmc), ("ensemble", ensemble)):
        raw_table = baseline if name == "hmc" else predictive_from_samples(
            summaries.raw, d_test)
        rows.append({"method": name, "representation": "sample",
                     **metrics(raw_table, summaries.raw, None)})
        for rep_name, g in (("q_d", summaries.q_direct),
                            ("q_r", summaries.q_rebasin)):
            draws = draw(g, n_parametric_draws, _child_seed(seed, f"{name}-{rep_name}"))
            table = predictive_from_samples(draws, d_test)
            rows.append({"method": name, "representation": rep_name,
                         **metrics(table, draws, g.mean_weights())})
    vi_set = vi_draws(vi, n_parametric_draws, _child_seed(seed, "vi"))
    vi_table = predictive_from_samples(vi_set, d_test)
    rows.append({"method": "vi", "representation": "q",
                 **metrics(vi_table, vi_set, vi.mean_weights())})
    return rows


def prune_sweep_rows(variants: dict, d_test: Dataset, fractions,
                     include_biases: bool = True) -> list[dict]:
    """Accuracy of each summary's pruned mean network per retain fraction.

    variants maps a name to a DiagGaussian; rows follow the argument order.
    """
    rows = []
    for name, g in variants.items():
        for frac in fractions:
            w = prune(g, float(frac), include_biases=include_biases)
            rows.append({"variant": name, "retain_fraction": float(frac),
                         "accuracy": accuracy(w, d_test)})
    return rows
