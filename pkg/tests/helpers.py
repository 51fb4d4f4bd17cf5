"""Shared constructions for tests."""

import numpy as np

from bnn_rebasin.data import Dataset
from bnn_rebasin.model import WeightSet
from bnn_rebasin.numerics import Rng


def informative_probe(w: WeightSet, rng: Rng, n_uniform: int = 256) -> Dataset:
    """Probe on which every hidden unit of w provably fires.

    Random nonnegative images can leave units with strongly negative mean
    weight silent, which makes them interchangeable for activation matching.
    Appending each unit's positive-weight indicator image guarantees a
    large distinctive response per unit.
    """
    uniform = rng.uniform(0.0, 1.0, size=(n_uniform, w.in_dim))
    indicators = (w.w1 > 0).astype(np.float64)
    images = np.vstack([uniform, indicators])
    return Dataset(images, np.zeros(images.shape[0], dtype=np.int64))


def perturbed(w: WeightSet, rng: Rng, std: float) -> WeightSet:
    return WeightSet(w.w1 + rng.normal(size=w.w1.shape, std=std),
                     w.b1 + rng.normal(size=w.b1.shape, std=std),
                     w.w2 + rng.normal(size=w.w2.shape, std=std),
                     w.b2 + rng.normal(size=w.b2.shape, std=std))
