"""Bayesian generalized fused lasso with a normal-exponential-gamma prior.

Gibbs samplers for sparse regression where both coefficients and their
differences along a fusion graph are shrunk, a deterministic sparsification
pass that turns posterior means into exact zeros and exact ties, and
information-criterion machinery for picking hyperparameters.
"""

from negfused.distributions import (
    LassoPenalty,
    NegParams,
    neg_log_density,
    neg_log_density_grad,
    parabolic_cylinder_d,
    sample_gamma,
    sample_inverse_gamma,
    sample_inverse_gaussian,
    univariate_shrinkage,
)

__version__ = "0.1.0"

__all__ = [
    "LassoPenalty",
    "NegParams",
    "neg_log_density",
    "neg_log_density_grad",
    "parabolic_cylinder_d",
    "sample_gamma",
    "sample_inverse_gamma",
    "sample_inverse_gaussian",
    "univariate_shrinkage",
    "__version__",
]
