"""One-hidden-layer ReLU MLP: forward pass, posterior terms, exact gradients, Adam.

The log joint is the summed (not averaged) cross-entropy likelihood plus an
isotropic Gaussian prior over all parameters, so the potential used by the
samplers has the correct Bayesian scale. Training loops rescale per batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import NumericalError
from .numerics import Rng, log_softmax_rows, softmax_rows


@dataclass
class ModelConfig:
    hidden_size: int = 512
    prior_std: float = 1.0
    activation: str = "relu"

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.prior_std <= 0:
            raise ValueError(f"prior_std must be > 0, got {self.prior_std}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation: {self.activation!r}")


@dataclass
class WeightSet:
    """MLP parameters: w1 (H, in), b1 (H,), w2 (out, H), b2 (out,)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.w1 = np.ascontiguousarray(self.w1, dtype=np.float64)
        self.b1 = np.ascontiguousarray(self.b1, dtype=np.float64)
        self.w2 = np.ascontiguousarray(self.w2, dtype=np.float64)
        self.b2 = np.ascontiguousarray(self.b2, dtype=np.float64)
        h, d = self.w1.shape
        out, h2 = self.w2.shape
        if self.b1.shape != (h,) or h2 != h or self.b2.shape != (out,):
            raise ValueError("inconsistent weight shapes")

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def from_flat(cls, flat: np.ndarray, hidden_size: int, in_dim: int,
                  out_dim: int) -> "WeightSet":
        flat = np.asarray(flat, dtype=np.float64)
        expected = hidden_size * in_dim + hidden_size + out_dim * hidden_size + out_dim
        if flat.shape != (expected,):
            raise ValueError(f"flat length {flat.shape} != expected ({expected},)")
        o1 = hidden_size * in_dim
        o2 = o1 + hidden_size
        o3 = o2 + out_dim * hidden_size
        return cls(flat[:o1].reshape(hidden_size, in_dim).copy(),
                   flat[o1:o2].copy(),
                   flat[o2:o3].reshape(out_dim, hidden_size).copy(),
                   flat[o3:].copy())

    def copy(self) -> "WeightSet":
        return WeightSet(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def same_architecture(self, other: "WeightSet") -> bool:
        return (self.w1.shape == other.w1.shape
                and self.w2.shape == other.w2.shape)


def init_weights(cfg: ModelConfig, in_dim: int, out_dim: int, rng: Rng) -> WeightSet:
    """Kaiming-style init: std sqrt(2 / fan_in), zero biases."""
    h = cfg.hidden_size
    w1 = rng.normal(size=(h, in_dim), std=np.sqrt(2.0 / in_dim))
    w2 = rng.normal(size=(out_dim, h), std=np.sqrt(2.0 / h))
    return WeightSet(w1, np.zeros(h), w2, np.zeros(out_dim))


def forward(w: WeightSet, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (hidden, logits); hidden is exposed for activation matching."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w.in_dim:
        raise ValueError(f"inputs {x.shape} incompatible with in_dim {w.in_dim}")
    hidden = np.maximum(x @ w.w1.T + w.b1, 0.0)
    logits = hidden @ w.w2.T + w.b2
    return hidden, logits


def cross_entropy_sum(logits: np.ndarray, labels: np.ndarray) -> float:
    log_probs = log_softmax_rows(logits)
    return float(-log_probs[np.arange(labels.shape[0]), labels].sum())


def neg_log_posterior(w: WeightSet, d: Dataset, prior_std: float = 1.0) -> float:
    """Summed cross-entropy plus ||W||^2 / (2 prior_std^2), constants dropped."""
    _, logits = forward(w, d.images)
    flat = w.flatten()
    return cross_entropy_sum(logits, d.labels) + float(flat @ flat) / (2.0 * prior_std ** 2)


def neg_log_posterior_and_grad(w: WeightSet, x: np.ndarray, labels: np.ndarray,
                               prior_std: float = 1.0, likelihood_scale: float = 1.0,
                               ) -> tuple[float, WeightSet]:
    """Value and exact gradient of the batch-restricted negative log posterior.

    The likelihood term (value and gradient) is multiplied by
    ``likelihood_scale`` (N/batch_size for a stochastic full-data estimate);
    the prior enters once, unscaled.
    """
    x = np.asarray(x, dtype=np.float64)
    hidden, logits = forward(w, x)
    n = x.shape[0]
    loss = cross_entropy_sum(logits, labels)

    dlogits = softmax_rows(logits)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits *= likelihood_scale
    gw2 = dlogits.T @ hidden
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w.w2
    dhidden[hidden <= 0.0] = 0.0
    gw1 = dhidden.T @ x
    gb1 = dhidden.sum(axis=0)

    inv_var = 1.0 / prior_std ** 2
    grad = WeightSet(gw1 + inv_var * w.w1, gb1 + inv_var * w.b1,
                     gw2 + inv_var * w.w2, gb2 + inv_var * w.b2)
    flat = w.flatten()
    value = likelihood_scale * loss + float(flat @ flat) * inv_var / 2.0
    return value, grad


def grad_neg_log_posterior(w: WeightSet, x: np.ndarray, labels: np.ndarray,
                           prior_std: float = 1.0, likelihood_scale: float = 1.0,
                           ) -> WeightSet:
    return neg_log_posterior_and_grad(w, x, labels, prior_std, likelihood_scale)[1]


def grad_cross_entropy_flat(w: WeightSet, x: np.ndarray, labels: np.ndarray,
                            ) -> tuple[float, np.ndarray]:
    """Summed cross-entropy and its flat gradient, without any prior term."""
    x = np.asarray(x, dtype=np.float64)
    hidden, logits = forward(w, x)
    loss = cross_entropy_sum(logits, labels)
    dlogits = softmax_rows(logits)
    dlogits[np.arange(x.shape[0]), labels] -= 1.0
    gw2 = dlogits.T @ hidden
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w.w2
    dhidden[hidden <= 0.0] = 0.0
    gw1 = dhidden.T @ x
    gb1 = dhidden.sum(axis=0)
    return loss, WeightSet(gw1, gb1, gw2, gb2).flatten()


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params))


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              ) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update on a flat parameter vector."""
    if state.m.shape != params.shape or grad.shape != params.shape:
        raise ValueError("Adam state/gradient shapes do not match parameters")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), new_params


def mean_cross_entropy(w: WeightSet, d: Dataset) -> float:
    _, logits = forward(w, d.images)
    return cross_entropy_sum(logits, d.labels) / d.size


def accuracy(w: WeightSet, d: Dataset) -> float:
    """Fraction of argmax predictions matching labels; ties go to the
    smallest class index."""
    _, logits = forward(w, d.images)
    return float((logits.argmax(axis=1) == d.labels).mean())
