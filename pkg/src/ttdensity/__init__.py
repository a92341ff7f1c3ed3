"""Density estimation with tensor-train coefficients over B-spline bases.

The model is a d-dimensional density whose coefficient tensor over a
tensor-product spline basis is kept in tensor-train form, which makes
evaluation, marginals, CDFs, the partition function and exact sampling all
tractable chain contractions.  The plain variant trains by Riemannian
minimization of a quadratic loss; the squared (always nonnegative) variant
trains by maximum likelihood.
"""

from .basis import BSplineBasis, basis_for_bounds
from .data import (Dataset, bounds_from_samples, gen_checkerboard, gen_corner_mixture,
                   gen_two_moons, load_csv, save_csv)
from .density import DensityModel, InvalidModelError, LogLikelihood
from .initialization import rank1_init, random_init
from .metrics import cross_entropy, sliced_tv
from .sampler import (SamplerState, conditional_cdf, conditional_pit, inverse_transform,
                      invert_cdf, sample)
from .training import (TangentVector, TrainConfig, TrainResult, l2_gradient, l2_loss,
                       nll_loss, optimal_step, project_to_tangent, riemannian_step, train)
from .tt import (Orthogonalization, TTTensor, apply_gram_operator, contract_rank1,
                 inner_product, orthogonalize, rank1_from_vectors, tt_round, tt_sum)

__version__ = "0.1.0"

__all__ = [
    "BSplineBasis", "basis_for_bounds",
    "Dataset", "bounds_from_samples", "gen_checkerboard", "gen_corner_mixture",
    "gen_two_moons", "load_csv", "save_csv",
    "DensityModel", "InvalidModelError", "LogLikelihood",
    "rank1_init", "random_init",
    "cross_entropy", "sliced_tv",
    "SamplerState", "conditional_cdf", "conditional_pit", "inverse_transform",
    "invert_cdf", "sample",
    "TangentVector", "TrainConfig", "TrainResult", "l2_gradient", "l2_loss",
    "nll_loss", "optimal_step", "project_to_tangent", "riemannian_step", "train",
    "Orthogonalization", "TTTensor", "apply_gram_operator", "contract_rank1",
    "inner_product", "orthogonalize", "rank1_from_vectors", "tt_round", "tt_sum",
]
