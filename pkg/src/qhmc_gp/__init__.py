"""Constrained Gaussian process regression trained by mass-randomized Hamiltonian Monte Carlo.

The library fits GP hyperparameters by sampling a penalized negative log
marginal likelihood with an HMC variant whose particle mass is redrawn from
a lognormal law at every proposal. Inequality and monotonicity constraints
are enforced probabilistically at adaptively chosen locations, either as
hard rejection barriers or soft hinge penalties.
"""

from .adaptive import (
    COMBINED,
    CONSTRAINT_ADAPTIVE,
    STRATEGIES,
    VARIANCE_ADAPTIVE,
    AdaptiveConfig,
    AdaptiveTrace,
    TraceStep,
    adaptive_train,
    default_init,
    latin_hypercube_grid,
    select_point,
)
from .bench import (
    METHOD_LABELS,
    BenchmarkSpec,
    ExperimentReport,
    add_noise,
    benchmark_domain,
    make_dataset,
    method_settings,
    relative_error,
    run_experiment,
    target,
    target_values,
)
from .constraints import (
    CONSTRAINT_KINDS,
    CONSTRAINT_MODES,
    HARD,
    MONOTONE_NONDECREASING,
    SOFT,
    VALUE_LOWER_BOUND,
    ConstraintSet,
    MarginReport,
    PenalizedObjective,
    hinge_penalty,
    margin,
    margin_values,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    penalized_gradient,
    penalized_potential,
    violation_probability,
)
from .gp import (
    HYPERPRIOR_STD,
    Dataset,
    GpCore,
    GpFit,
    PosteriorSummary,
    derivative_posterior,
    neg_log_hyperprior,
    nll,
    nll_grad,
    posterior,
    potential,
)
from .kernels import (
    JITTER_LEVELS,
    CovMatrix,
    Hyperparams,
    IllConditionedKernelError,
    cholesky_with_jitter,
    cov_matrix,
    pairwise_sq_dists,
    se_kernel,
    se_kernel_dxdxp,
    se_kernel_dxp,
)
from .sampler import (
    QhmcConfig,
    SampleChain,
    leapfrog,
    mh_accept,
    run_chain,
    run_hmc_chain,
    sample_mass,
    sample_momentum,
)

__version__ = "0.1.0"
