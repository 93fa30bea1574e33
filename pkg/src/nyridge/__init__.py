"""Column-sampled low-rank kernel ridge regression.

Approximate an n x n kernel matrix from p of its columns, solve the reduced
ridge problem in O(p^2 n), and analyze exactly (in fixed design) how large p
must be before nothing is lost: the answer scales with the ridge smoother's
degrees of freedom rather than with any matrix-approximation error.
"""

from .errors import (
    ConfigError,
    DataError,
    NumericalError,
    NyridgeError,
    VacuousBoundError,
)
from .kernels import (
    KernelMatrix,
    KernelSpec,
    gaussian_kernel,
    gram,
    periodic_exp_kernel,
    periodic_poly_kernel,
)
from .lowrank import (
    ColumnSelection,
    LowRankFactor,
    approx_error,
    feature_map,
    feature_matrix,
    nystrom,
    pivoted_ichol,
    sample_columns,
)
from .regression import RidgeFit, krr_exact, krr_lowrank, newton_solve, predict
from .stats import (
    DofReport,
    RateFit,
    bias_variance,
    dof,
    dof_report,
    fit_rate,
    optimal_lambda,
    sufficient_rank,
    theorem_rank_bound,
    verify_lemma_tail,
    verify_theorem,
)
from .synthetic import (
    DecayLaw,
    FixedDesignProblem,
    SpectrumSpec,
    draw_noise,
    eig_circulant,
    grid_problem,
    random_design_problem,
)

__version__ = "0.1.0"

__all__ = [
    "ColumnSelection",
    "ConfigError",
    "DataError",
    "DecayLaw",
    "DofReport",
    "FixedDesignProblem",
    "KernelMatrix",
    "KernelSpec",
    "LowRankFactor",
    "NumericalError",
    "NyridgeError",
    "RateFit",
    "RidgeFit",
    "SpectrumSpec",
    "VacuousBoundError",
    "approx_error",
    "bias_variance",
    "dof",
    "dof_report",
    "draw_noise",
    "eig_circulant",
    "feature_map",
    "feature_matrix",
    "fit_rate",
    "gaussian_kernel",
    "gram",
    "grid_problem",
    "krr_exact",
    "krr_lowrank",
    "newton_solve",
    "nystrom",
    "optimal_lambda",
    "periodic_exp_kernel",
    "periodic_poly_kernel",
    "pivoted_ichol",
    "predict",
    "random_design_problem",
    "sample_columns",
    "sufficient_rank",
    "theorem_rank_bound",
    "verify_lemma_tail",
    "verify_theorem",
]
