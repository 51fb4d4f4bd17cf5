"""Bayesian MLP workbench: inference engines, permutation rebasin, and
compact diagonal-Gaussian posterior summaries."""

from .data import Dataset, load_idx, subset, synthetic_blobs, synthetic_mnist_like
from .errors import DataFormatError, NumericalError
from .inference import (HmcConfig, SampleSet, ViPosterior, desk_hmc_config,
                        hmc_sample, train_ensemble, train_map, train_vi, vi_draws)
from .model import ModelConfig, WeightSet, accuracy, forward, init_weights, \
    neg_log_posterior
from .numerics import Rng
from .permutation import (Permutation, apply_to_weights, compose,
                          cycle_decompose, identity, invert, not_count,
                          random_with_not)
from .posterior import DiagGaussian, draw, fit_direct, fit_rebasin, merge, prune
from .rebasin import (AlignmentReport, activation_match, align_sample_set,
                      solve_lap_max, weight_match)

__version__ = "0.1.0"
