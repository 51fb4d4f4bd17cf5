"""Hidden-unit alignment: assignment solver, weight and activation matching.

With a single hidden layer the matching objective is exactly a linear
assignment problem, so one Hungarian solve is optimal; no coordinate descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import Dataset
from .model import WeightSet, forward
from .permutation import Permutation, apply_to_weights, not_count

MATCH_METHODS = ("weight", "activation")


@dataclass
class AlignmentReport:
    permutation: Permutation
    not_count: int
    l2_before: float
    l2_after: float
    objective: float

    def to_json(self) -> dict:
        return {
            "permutation": self.permutation.map.tolist(),
            "not": self.not_count,
            "l2_before": self.l2_before,
            "l2_after": self.l2_after,
            "objective": self.objective,
        }


def solve_lap_max(cost: np.ndarray) -> Permutation:
    """Permutation maximizing sum_i cost[i, map[i]]; deterministic."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost, maximize=True)
    return Permutation(cols[np.argsort(rows)])


def unit_feature_rows(w: WeightSet) -> np.ndarray:
    """Row i: everything tied to hidden unit i (w1 row, bias, w2 column)."""
    return np.concatenate([w.w1, w.b1[:, None], w.w2.T], axis=1)


def _report(reference: WeightSet, candidate: WeightSet, cost: np.ndarray,
            ) -> AlignmentReport:
    p = solve_lap_max(cost)
    ref_flat = reference.flatten()
    l2_before = float(np.linalg.norm(ref_flat - candidate.flatten()))
    l2_after = float(np.linalg.norm(ref_flat - apply_to_weights(p, candidate).flatten()))
    objective = float(cost[np.arange(p.size), p.map].sum())
    return AlignmentReport(p, not_count(p), l2_before, l2_after, objective)


def weight_match(reference: WeightSet, candidate: WeightSet) -> AlignmentReport:
    """Match units by inner products of their weight vectors; the returned
    permutation minimizes the flat l2 distance to the reference."""
    if not reference.same_architecture(candidate):
        raise ValueError("architecture mismatch between reference and candidate")
    cost = unit_feature_rows(reference) @ unit_feature_rows(candidate).T
    return _report(reference, candidate, cost)


def _normalized_activations(w: WeightSet, probe: Dataset) -> np.ndarray:
    acts, _ = forward(w, probe.images)
    acts = acts - acts.mean(axis=0)
    norms = np.linalg.norm(acts, axis=0)
    nonzero = norms > 0.0
    acts[:, nonzero] /= norms[nonzero]
    return acts


def activation_match(reference: WeightSet, candidate: WeightSet,
                     probe: Dataset) -> AlignmentReport:
    """Match units by correlation of hidden activations on a probe set.

    Zero-variance units contribute an all-zero cost row/column and are
    assigned arbitrarily among themselves.
    """
    if not reference.same_architecture(candidate):
        raise ValueError("architecture mismatch between reference and candidate")
    if probe.size < 1:
        raise ValueError("probe dataset is empty")
    a_ref = _normalized_activations(reference, probe)
    a_cand = _normalized_activations(candidate, probe)
    cost = a_ref.T @ a_cand
    return _report(reference, candidate, cost)


def match(reference: WeightSet, candidate: WeightSet, method: str = "weight",
          probe: Dataset | None = None) -> AlignmentReport:
    if method == "weight":
        return weight_match(reference, candidate)
    if method == "activation":
        if probe is None:
            raise ValueError("activation matching requires a probe dataset")
        return activation_match(reference, candidate, probe)
    raise ValueError(f"unknown match method {method!r} (expected one of {MATCH_METHODS})")


def align_sample_set(samples, method: str = "activation",
                     probe: Dataset | None = None):
    """Align every sample to sample 0 (returned unchanged), preserving order."""
    from .inference import SampleSet  # local import to keep the module DAG acyclic

    if len(samples.samples) < 2:
        raise ValueError("need at least 2 samples to align")
    reference = samples.samples[0]
    aligned = [reference.copy()]
    reports = []
    for cand in samples.samples[1:]:
        rep = match(reference, cand, method=method, probe=probe)
        aligned.append(apply_to_weights(rep.permutation, cand))
        reports.append(rep)
    meta = dict(samples.meta)
    meta["aligned"] = {"method": method, "reference_id": 0,
                       "nots": [r.not_count for r in reports]}
    return SampleSet(aligned, samples.method, meta)
