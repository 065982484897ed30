"""Synthetic benchmark targets, dataset generation, the error metric, and experiment orchestration."""

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .adaptive import (
    COMBINED,
    CONSTRAINT_ADAPTIVE,
    VARIANCE_ADAPTIVE,
    AdaptiveConfig,
    adaptive_train,
    latin_hypercube_grid,
)
from .constraints import (
    HARD,
    MONOTONE_NONDECREASING,
    SOFT,
    VALUE_LOWER_BOUND,
    ConstraintSet,
)
from .gp import Dataset
from .sampler import QhmcConfig

ARCTAN2D = "arctan2d"
ACKLEY10D = "ackley10d"
MONO5D = "mono5d"
ARCTAN_SUM_ND = "arctan_sum_nd"

#: Required input dimension per target; None means the caller chooses.
FUNCTION_DIMS = {ARCTAN2D: 2, ACKLEY10D: 10, MONO5D: 5, ARCTAN_SUM_ND: None}

_ACKLEY_A = 20.0
_ACKLEY_B = 0.2
_ACKLEY_C = 2.0 * math.pi

METHOD_LABELS = ("unconstrained",) + tuple(
    f"{sampler}{soft}-{tail}"
    for sampler in ("qhmc", "hmc")
    for soft in ("", "-soft")
    for tail in ("ad", "var", "both")
)

_STRATEGY_BY_TAIL = {"ad": CONSTRAINT_ADAPTIVE, "var": VARIANCE_ADAPTIVE, "both": COMBINED}


def target_values(function_name, X):
    """Vectorized evaluation of a named benchmark target on rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    required = FUNCTION_DIMS.get(function_name)
    if function_name not in FUNCTION_DIMS:
        raise ValueError(f"unknown benchmark function {function_name!r}")
    if required is not None and X.shape[1] != required:
        raise ValueError(f"{function_name} expects dim={required}, got {X.shape[1]}")
    if function_name == ARCTAN2D:
        return np.arctan(5.0 * X[:, 0]) + np.arctan(X[:, 1])
    if function_name == ACKLEY10D:
        d = X.shape[1]
        root_term = -_ACKLEY_A * np.exp(-_ACKLEY_B * np.sqrt(np.sum(X**2, axis=1) / d))
        cos_term = -np.exp(np.sum(np.cos(_ACKLEY_C * X), axis=1) / d)
        return root_term + cos_term + _ACKLEY_A + math.e
    if function_name == MONO5D:
        return (
            np.arctan(5.0 * X[:, 0])
            + np.arctan(2.0 * X[:, 1])
            + X[:, 2]
            + 2.0 * X[:, 3] ** 2
            + 2.0 / (1.0 + np.exp(-10.0 * (X[:, 4] - 0.5)))
        )
    d = X.shape[1]
    coeff = 5.0 * (1.0 - np.arange(1, d + 1) / (d + 1.0))
    return np.sum(np.arctan(coeff * X), axis=1)


def target(function_name, x):
    """Scalar evaluation of a named benchmark target at one point."""
    return float(target_values(function_name, np.asarray(x, dtype=float).reshape(1, -1))[0])


def benchmark_domain(function_name, dim):
    """Box domain of a target as rows of (low, high); the Ackley box is wide, the rest are unit."""
    if function_name == ACKLEY10D:
        return np.tile([-10.0, 10.0], (dim, 1))
    return np.tile([0.0, 1.0], (dim, 1))


def default_constraint(function_name):
    """Constraint kind and lower bound conventionally attached to each target."""
    if function_name == ACKLEY10D:
        return VALUE_LOWER_BOUND, 5.0
    if function_name == ARCTAN2D:
        return VALUE_LOWER_BOUND, 0.0
    return MONOTONE_NONDECREASING, 0.0


@dataclass(frozen=True)
class BenchmarkSpec:
    """One benchmark instance: target, sizes, noise level, constraint, seed."""

    function_name: str = ARCTAN2D
    dim: int = None
    n_train: int = 100
    n_test: int = 1000
    snr_percent: float = 0.0
    constraint_kind: str = None
    constraint_bound: float = None
    seed: int = 0

    def __post_init__(self):
        if self.function_name not in FUNCTION_DIMS:
            raise ValueError(f"unknown benchmark function {self.function_name!r}")
        required = FUNCTION_DIMS[self.function_name]
        if required is None:
            if self.dim is None or self.dim < 1:
                raise ValueError(f"dim must be given (>= 1) for {self.function_name}")
        elif self.dim is None:
            object.__setattr__(self, "dim", required)
        elif self.dim != required:
            raise ValueError(f"{self.function_name} requires dim={required}, got {self.dim}")
        if self.n_train < 1:
            raise ValueError("n_train must be at least 1")
        if self.n_test < 1:
            raise ValueError("n_test must be at least 1")
        if self.snr_percent < 0.0:
            raise ValueError("snr_percent must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        kind, bound = default_constraint(self.function_name)
        if self.constraint_kind is None:
            object.__setattr__(self, "constraint_kind", kind)
        if self.constraint_bound is None:
            object.__setattr__(self, "constraint_bound", bound)

    @property
    def domain(self):
        return benchmark_domain(self.function_name, self.dim)


def add_noise(y_clean, snr_percent, rng):
    """Add iid Gaussian noise with std equal to snr_percent/100 of the signal's std."""
    y_clean = np.asarray(y_clean, dtype=float)
    if snr_percent < 0.0:
        raise ValueError("snr_percent must be nonnegative")
    if snr_percent == 0.0:
        return y_clean.copy()
    scale = float(np.std(y_clean))
    if scale == 0.0:
        raise ValueError("noise scale is undefined for a constant signal")
    return y_clean + (snr_percent / 100.0) * scale * rng.standard_normal(y_clean.size)


def make_dataset(spec, rng):
    """Uniform training and test draws over the benchmark box, with seeded noise.

    Returns (dataset, test inputs, test truths).
    """
    dom = spec.domain
    X = rng.uniform(dom[:, 0], dom[:, 1], size=(spec.n_train, spec.dim))
    X_test = rng.uniform(dom[:, 0], dom[:, 1], size=(spec.n_test, spec.dim))
    y = add_noise(target_values(spec.function_name, X), spec.snr_percent, rng)
    return Dataset(X, y), X_test, target_values(spec.function_name, X_test)


def relative_error(y_pred, y_true):
    """Relative l2 error sqrt(sum((pred - true)^2) / sum(true^2))."""
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    y_true = np.asarray(y_true, dtype=float).ravel()
    if y_pred.size != y_true.size or y_pred.size < 1:
        raise ValueError("prediction and truth must have equal, nonzero lengths")
    denom = float(y_true @ y_true)
    if denom == 0.0:
        raise ValueError("relative error is undefined for an all-zero truth")
    diff = y_pred - y_true
    return math.sqrt(float(diff @ diff) / denom)


def method_settings(method):
    """Decode a method label into sampler kind, constraint mode, and strategy."""
    if method not in METHOD_LABELS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHOD_LABELS}")
    if method == "unconstrained":
        return {"sampler": "qhmc", "mode": HARD, "strategy": COMBINED, "constrained": False}
    parts = method.split("-")
    return {
        "sampler": parts[0],
        "mode": SOFT if "soft" in parts else HARD,
        "strategy": _STRATEGY_BY_TAIL[parts[-1]],
        "constrained": True,
    }


@dataclass
class ExperimentReport:
    """Headline metrics of one trained benchmark run."""

    rel_error: float
    mean_posterior_variance: float
    wall_time_s: float
    acceptance_rate: float
    n_constraints_final: int
    method: str
    trace: object
    rel_error_chain_avg: float
    spec: BenchmarkSpec


def run_experiment(spec, method, qhmc_config=None, adaptive_config=None,
                   eta=0.022, penalty_weight=100.0, n_candidates=512):
    """Build the dataset, run adaptive training, and report test metrics.

    Deterministic given spec.seed except for wall_time_s. The headline
    rel_error is the final trace entry's.
    """
    t_start = time.perf_counter()
    settings = method_settings(method)
    data_rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 1]))
    data, X_test, y_test = make_dataset(spec, data_rng)
    qcfg = qhmc_config if qhmc_config is not None else QhmcConfig(seed=spec.seed)
    if settings["sampler"] == "hmc" and qcfg.sigma_m != 0.0:
        qcfg = replace(qcfg, sigma_m=0.0)
    if adaptive_config is None:
        grid = latin_hypercube_grid(spec.domain, n_candidates, seed=spec.seed)
        adaptive_config = AdaptiveConfig(
            candidate_grid=grid,
            strategy=settings["strategy"],
            max_constraints=20 if settings["constrained"] else 0,
        )
    elif not settings["constrained"] and adaptive_config.max_constraints != 0:
        adaptive_config = replace(adaptive_config, max_constraints=0)
    cset_template = ConstraintSet(
        points=np.empty((0, spec.dim)),
        kind=spec.constraint_kind,
        bound=spec.constraint_bound,
        mode=settings["mode"],
        eta=eta,
        penalty_weight=penalty_weight,
    )
    try:
        fit, trace = adaptive_train(data, qcfg, cset_template, adaptive_config, X_test, y_test)
    except Exception as exc:
        raise RuntimeError(f"experiment {spec.function_name}/{method} (seed {spec.seed}) failed: {exc}") from exc
    last = trace.steps[-1]
    return ExperimentReport(
        rel_error=last.rel_error,
        mean_posterior_variance=last.mean_post_var,
        wall_time_s=time.perf_counter() - t_start,
        acceptance_rate=trace.final_acceptance_rate,
        n_constraints_final=last.n_constraints,
        method=method,
        trace=trace,
        rel_error_chain_avg=trace.chain_averaged_rel_error,
        spec=spec,
    )
