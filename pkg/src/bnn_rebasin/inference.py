"""Posterior approximation engines: MAP / deep ensemble, mean-field VI, HMC.

All engines consume a seed (or Rng) and are bit-reproducible. The HMC core
works on flat vectors with caller-supplied potential/gradient callbacks so
it can be validated on analytic targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, batches
from .errors import NumericalError
from .model import (AdamState, ModelConfig, WeightSet, adam_step,
                    grad_cross_entropy_flat, init_weights)
from .numerics import Rng
from .permutation import apply_to_weights, random_permutation


@dataclass
class SampleSet:
    """Ordered posterior samples from one inference method."""

    samples: list
    method: str  # hmc | ensemble | vi-draws | ...
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ValueError("SampleSet needs at least one sample")
        first = self.samples[0]
        for s in self.samples[1:]:
            if not first.same_architecture(s):
                raise ValueError("samples do not share one architecture")

    def __len__(self) -> int:
        return len(self.samples)

    def flats(self) -> list[np.ndarray]:
        return [s.flatten() for s in self.samples]


@dataclass
class HmcConfig:
    """Full-budget defaults; see desk_hmc_config() for a CPU-size budget."""

    burn_in_epochs: int = 600
    thin: int = 10
    leapfrog_steps: int = 500
    step_size: float = 1e-3
    target_samples: int = 1000
    step_size_adapt: bool = True
    target_accept: float = 0.65
    mix_permutations: bool = False

    def __post_init__(self):
        for name in ("burn_in_epochs", "thin", "leapfrog_steps", "target_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")


def desk_hmc_config(**overrides) -> HmcConfig:
    """Small-budget HMC configuration for CPU-scale experiments."""
    cfg = dict(burn_in_epochs=100, thin=5, leapfrog_steps=50, step_size=2e-3,
               target_samples=100, step_size_adapt=True)
    cfg.update(overrides)
    return HmcConfig(**cfg)


def softplus(x) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(y)))


@dataclass
class ViPosterior:
    """Mean-field Gaussian over flat parameters; sigma = softplus(rho)."""

    mu: np.ndarray
    rho: np.ndarray
    hidden_size: int
    in_dim: int
    out_dim: int

    def __post_init__(self):
        self.mu = np.ascontiguousarray(self.mu, dtype=np.float64)
        self.rho = np.ascontiguousarray(self.rho, dtype=np.float64)
        if self.mu.shape != self.rho.shape:
            raise ValueError("mu and rho lengths differ")

    @property
    def sigma(self) -> np.ndarray:
        return softplus(self.rho)

    def mean_weights(self) -> WeightSet:
        return WeightSet.from_flat(self.mu, self.hidden_size, self.in_dim,
                                   self.out_dim)


# ---------------------------------------------------------------------------
# MAP / deep ensemble
# ---------------------------------------------------------------------------

def train_map(d: Dataset, cfg: ModelConfig, epochs: int, lr: float, seed: int = 0,
              batch_size: int = 128, rng: Rng | None = None,
              init: WeightSet | None = None) -> WeightSet:
    """Adam on the negative log posterior in per-example units: mean batch
    cross-entropy plus prior / N."""
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    root = rng if rng is not None else Rng(seed)
    w = init if init is not None else init_weights(cfg, d.dim, d.num_classes,
                                                   root.split("init"))
    flat = w.flatten()
    state = AdamState.zeros_like(flat)
    n = d.size
    inv_var_n = 1.0 / (cfg.prior_std ** 2 * n)
    for epoch in range(epochs):
        ep_rng = root.split(f"batches-{epoch}")
        for x, y in batches(d, batch_size, ep_rng):
            w = WeightSet.from_flat(flat, cfg.hidden_size, d.dim, d.num_classes)
            loss, grad_ce = grad_cross_entropy_flat(w, x, y)
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch}")
            grad = grad_ce / x.shape[0] + flat * inv_var_n
            state, flat = adam_step(state, flat, grad, lr)
    return WeightSet.from_flat(flat, cfg.hidden_size, d.dim, d.num_classes)


def train_ensemble(d: Dataset, cfg: ModelConfig, members: int, epochs: int,
                   lr: float, seed: int, batch_size: int = 128) -> SampleSet:
    """Independently initialized and independently batched MAP runs."""
    if members < 2:
        raise ValueError(f"ensemble needs >= 2 members, got {members}")
    root = Rng(seed)
    samples = [train_map(d, cfg, epochs, lr, batch_size=batch_size,
                         rng=root.split(f"member-{k}"))
               for k in range(members)]
    meta = {"seed": seed, "members": members, "epochs": epochs, "lr": lr,
            "batch_size": batch_size, "hidden_size": cfg.hidden_size,
            "prior_std": cfg.prior_std}
    return SampleSet(samples, "ensemble", meta)


# ---------------------------------------------------------------------------
# Mean-field variational inference
# ---------------------------------------------------------------------------

def kl_diag_gaussian_to_prior(mu: np.ndarray, sigma: np.ndarray,
                              prior_std: float) -> float:
    """KL( N(mu, diag sigma^2) || N(0, prior_std^2 I) ), exact."""
    var_ratio = (sigma / prior_std) ** 2
    return float(0.5 * np.sum(var_ratio + (mu / prior_std) ** 2 - 1.0
                              - np.log(var_ratio)))


def elbo_and_grads(q: ViPosterior, x: np.ndarray, y: np.ndarray, eps: np.ndarray,
                   prior_std: float, likelihood_scale: float,
                   ) -> tuple[float, np.ndarray, np.ndarray]:
    """Single-sample reparameterized ELBO and exact gradients wrt (mu, rho).

    eps is the frozen standard-normal noise vector; the likelihood term is
    scaled by ``likelihood_scale`` (N / batch_size for minibatches).
    """
    sigma = q.sigma
    w_flat = q.mu + sigma * eps
    w = WeightSet.from_flat(w_flat, q.hidden_size, q.in_dim, q.out_dim)
    nll, grad_nll = grad_cross_entropy_flat(w, x, y)
    dsigma_drho = 1.0 / (1.0 + np.exp(-q.rho))  # softplus'

    kl = kl_diag_gaussian_to_prior(q.mu, sigma, prior_std)
    elbo = -likelihood_scale * nll - kl

    grad_mu = -likelihood_scale * grad_nll - q.mu / prior_std ** 2
    grad_sigma_kl = sigma / prior_std ** 2 - 1.0 / sigma
    grad_rho = (-likelihood_scale * grad_nll * eps - grad_sigma_kl) * dsigma_drho
    return elbo, grad_mu, grad_rho


def train_vi(d: Dataset, cfg: ModelConfig, epochs: int, lr: float, seed: int,
             batch_size: int = 128, init_sigma: float = 1e-2) -> ViPosterior:
    """Maximize the ELBO with one reparameterized draw per step and Adam."""
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    root = Rng(seed)
    w0 = init_weights(cfg, d.dim, d.num_classes, root.split("init"))
    mu = w0.flatten()
    rho = np.full_like(mu, softplus_inv(init_sigma))
    params = np.concatenate([mu, rho])
    state = AdamState.zeros_like(params)
    m = mu.size
    n = d.size
    noise_rng = root.split("noise")
    for epoch in range(epochs):
        ep_rng = root.split(f"batches-{epoch}")
        for x, y in batches(d, batch_size, ep_rng):
            q = ViPosterior(params[:m], params[m:], cfg.hidden_size, d.dim,
                            d.num_classes)
            eps = noise_rng.normal(size=m)
            elbo, gmu, grho = elbo_and_grads(q, x, y, eps, cfg.prior_std,
                                             likelihood_scale=n / x.shape[0])
            if not np.isfinite(elbo):
                raise NumericalError(f"VI diverged at epoch {epoch}")
            state, params = adam_step(state, params,
                                      np.concatenate([-gmu, -grho]), lr)
    return ViPosterior(params[:m], params[m:], cfg.hidden_size, d.dim,
                       d.num_classes)


def vi_draws(q: ViPosterior, k: int, seed: int) -> SampleSet:
    """k reparameterized draws mu + sigma * eps."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = Rng(seed).split("vi-draws")
    sigma = q.sigma
    samples = []
    for _ in range(k):
        flat = q.mu + sigma * rng.normal(size=q.mu.size)
        samples.append(WeightSet.from_flat(flat, q.hidden_size, q.in_dim,
                                           q.out_dim))
    return SampleSet(samples, "vi-draws", {"seed": seed, "k": k})


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo
# ---------------------------------------------------------------------------

def leapfrog(q: np.ndarray, p: np.ndarray, step_size: float, n_steps: int,
             grad_fn) -> tuple[np.ndarray, np.ndarray]:
    """Symplectic leapfrog integration of (q, p) under unit mass."""
    q = q.copy()
    p = p - 0.5 * step_size * grad_fn(q)
    for _ in range(n_steps - 1):
        q += step_size * p
        p -= step_size * grad_fn(q)
    q += step_size * p
    p -= 0.5 * step_size * grad_fn(q)
    return q, p


@dataclass
class HmcStats:
    accept_probs: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.accepted else 0.0


def hmc_chain(potential_fn, grad_fn, init: np.ndarray, rng: Rng, n_epochs: int,
              leapfrog_steps: int, step_size: float, adapt_epochs: int = 0,
              target_accept: float = 0.65, max_consecutive_rejects: int = 100,
              on_epoch=None) -> tuple[np.ndarray, HmcStats]:
    """Generic HMC chain: one momentum refresh + trajectory + Metropolis test
    per epoch. Step size is adapted toward ``target_accept`` during the first
    ``adapt_epochs`` epochs (Robbins-Monro on log step size), then frozen.
    """
    q = np.asarray(init, dtype=np.float64).copy()
    u = potential_fn(q)
    stats = HmcStats()
    consecutive_rejects = 0
    log_eps = float(np.log(step_size))
    for epoch in range(n_epochs):
        eps = float(np.exp(log_eps))
        p = rng.normal(size=q.size)
        h_before = u + 0.5 * float(p @ p)
        q_new, p_new = leapfrog(q, p, eps, leapfrog_steps, grad_fn)
        u_new = potential_fn(q_new)
        h_after = u_new + 0.5 * float(p_new @ p_new)
        if np.isfinite(h_after):
            accept_prob = min(1.0, float(np.exp(min(0.0, h_before - h_after))))
        else:
            accept_prob = 0.0
        accepted = rng.uniform() < accept_prob
        if accepted:
            q, u = q_new, u_new
            consecutive_rejects = 0
        else:
            consecutive_rejects += 1
            if consecutive_rejects > max_consecutive_rejects:
                raise NumericalError(
                    f"HMC rejected {consecutive_rejects} consecutive proposals "
                    f"at epoch {epoch} (step size {eps:.3g})")
        if epoch < adapt_epochs:
            gamma = 0.3 / (1.0 + epoch) ** 0.55
            log_eps += gamma * (accept_prob - target_accept)
        stats.accept_probs.append(accept_prob)
        stats.accepted.append(bool(accepted))
        stats.step_sizes.append(eps)
        if on_epoch is not None:
            q2 = on_epoch(epoch, q)
            if q2 is not q:  # state was transformed; refresh the cached potential
                q = q2
                u = potential_fn(q)
    return q, stats


def hmc_sample(d: Dataset, cfg: ModelConfig, h: HmcConfig, init: WeightSet,
               seed: int) -> SampleSet:
    """HMC over the full-data negative log posterior of the MLP.

    With ``mix_permutations`` the chain interleaves an exact symmetry move
    (a uniform random hidden-unit relabeling) after each trajectory; the
    relabeling leaves the posterior invariant, so the kernel stays valid
    while mixing across the H! equivalent modes a short chain would not
    otherwise visit.
    """
    root = Rng(seed)
    chain_rng = root.split("chain")
    perm_rng = root.split("perm-moves")
    x, y = d.images, d.labels
    inv_var = 1.0 / cfg.prior_std ** 2
    hidden, in_dim, out = init.hidden_size, init.in_dim, init.out_dim

    def unflatten(flat):
        return WeightSet.from_flat(flat, hidden, in_dim, out)

    def potential(flat):
        w = unflatten(flat)
        loss, _ = grad_cross_entropy_flat(w, x, y)
        return loss + 0.5 * inv_var * float(flat @ flat)

    def grad(flat):
        w = unflatten(flat)
        _, g = grad_cross_entropy_flat(w, x, y)
        return g + inv_var * flat

    samples: list[WeightSet] = []
    recorded_epochs: list[int] = []

    def on_epoch(epoch, q):
        if h.mix_permutations:
            perm = random_permutation(hidden, perm_rng)
            q = apply_to_weights(perm, unflatten(q)).flatten()  # new array -> potential refresh
        post_burn = epoch + 1 - h.burn_in_epochs
        if post_burn > 0 and post_burn % h.thin == 0 and len(samples) < h.target_samples:
            samples.append(unflatten(q))
            recorded_epochs.append(epoch)
        return q

    n_epochs = h.burn_in_epochs + h.thin * h.target_samples
    adapt = h.burn_in_epochs if h.step_size_adapt else 0
    _, stats = hmc_chain(potential, grad, init.flatten(), chain_rng, n_epochs,
                         h.leapfrog_steps, h.step_size, adapt_epochs=adapt,
                         target_accept=h.target_accept, on_epoch=on_epoch)
    if len(samples) < h.target_samples:
        raise NumericalError(
            f"collected {len(samples)} of {h.target_samples} samples")
    meta = {"seed": seed, "burn_in_epochs": h.burn_in_epochs, "thin": h.thin,
            "leapfrog_steps": h.leapfrog_steps,
            "target_samples": h.target_samples,
            "initial_step_size": h.step_size,
            "final_step_size": stats.step_sizes[-1],
            "acceptance_rate": stats.acceptance_rate,
            "mix_permutations": h.mix_permutations,
            "hidden_size": cfg.hidden_size, "prior_std": cfg.prior_std,
            "recorded_epochs": recorded_epochs}
    return SampleSet(samples, "hmc", meta)
