"""Constraint margins, violation probabilities, and penalized sampling potentials.

A lower-bound constraint at a point holds with probability at least 1 - eta
exactly when the margin

    mean - beta * std - bound,   beta = -Phi^{-1}(eta)

is nonnegative. Monotonicity constraints apply the same test to the
derivative posterior, dimension by dimension. Soft mode adds a quadratic
hinge on negative margins to the sampling potential; hard mode makes
violating hyperparameter states infinitely energetic so the MH step rejects
them.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .gp import GpCore
from .kernels import Hyperparams, IllConditionedKernelError

VALUE_LOWER_BOUND = "value_lower_bound"
MONOTONE_NONDECREASING = "monotone_nondecreasing"
CONSTRAINT_KINDS = (VALUE_LOWER_BOUND, MONOTONE_NONDECREASING)

HARD = "hard"
SOFT = "soft"
CONSTRAINT_MODES = (HARD, SOFT)

#: Central-difference step, in log-hyperparameter space, for the penalty gradient.
PENALTY_FD_STEP = 1e-5

# Log-hyperparameter magnitudes past this are treated as infinite-energy
# states by the sampler-facing adapters rather than raising; past 350 the
# squared linear-scale values leave the normal double range.
_THETA_LIMIT = 350.0

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Abramowitz & Stegun 26.2.17 tail polynomial (absolute error < 7.5e-8).
_CDF_P = 0.2316419
_CDF_B = (0.319381530, -0.356563782, 1.781477937, -1.821255978, 1.330274429)

# Acklam's rational initializer for the inverse normal CDF.
_PPF_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_PPF_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_PPF_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_PPF_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_PPF_LOW = 0.02425


def normal_pdf(x):
    """Standard normal density."""
    return math.exp(-0.5 * x * x) / _SQRT_2PI


def normal_cdf(x):
    """Standard normal CDF via the Abramowitz & Stegun 26.2.17 polynomial.

    Absolute error below 7.5e-8; implemented locally so constraint tests do
    not depend on platform math libraries.
    """
    if math.isnan(x):
        raise ValueError("normal_cdf argument must not be NaN")
    z = abs(x)
    t = 1.0 / (1.0 + _CDF_P * z)
    b1, b2, b3, b4, b5 = _CDF_B
    poly = t * (b1 + t * (b2 + t * (b3 + t * (b4 + t * b5))))
    tail = normal_pdf(z) * poly
    return tail if x < 0.0 else 1.0 - tail


def normal_quantile(p):
    """Inverse of ``normal_cdf``: Acklam's rational estimate plus two Newton steps.

    The polish targets this module's own CDF, so cdf(quantile(p)) == p to
    near machine precision and margin/probability tests agree at the
    boundary.
    """
    if not (isinstance(p, (int, float)) and 0.0 < p < 1.0):
        raise ValueError(f"probability must lie strictly in (0, 1), got {p!r}")
    if p < _PPF_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = _ppf_tail(q)
    elif p > 1.0 - _PPF_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -_ppf_tail(q)
    else:
        q = p - 0.5
        r = q * q
        a1, a2, a3, a4, a5, a6 = _PPF_A
        b1, b2, b3, b4, b5 = _PPF_B
        num = (((((a1 * r + a2) * r + a3) * r + a4) * r + a5) * r + a6) * q
        den = ((((b1 * r + b2) * r + b3) * r + b4) * r + b5) * r + 1.0
        x = num / den
    for _ in range(3):
        x -= (normal_cdf(x) - p) / normal_pdf(x)
    return x


def _ppf_tail(q):
    c1, c2, c3, c4, c5, c6 = _PPF_C
    d1, d2, d3, d4 = _PPF_D
    num = ((((c1 * q + c2) * q + c3) * q + c4) * q + c5) * q + c6
    den = (((d1 * q + d2) * q + d3) * q + d4) * q + 1.0
    return num / den


@dataclass(frozen=True)
class ConstraintSet:
    """Constraint locations plus what is enforced there and how.

    ``kind`` selects a lower bound on the value (with ``bound``) or
    monotone-nondecreasing behavior along ``active_dims`` (empty tuple means
    every input dimension). An empty point set reduces training to the
    unconstrained GP.
    """

    points: np.ndarray
    kind: str = VALUE_LOWER_BOUND
    bound: float = 0.0
    active_dims: tuple = ()
    mode: str = HARD
    eta: float = 0.022
    penalty_weight: float = 100.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(0, 0) if pts.size == 0 else pts.reshape(1, -1)
        if pts.ndim != 2:
            raise ValueError(f"constraint points must be a 2-d array, got shape {pts.shape}")
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("constraint points must be finite")
        object.__setattr__(self, "points", pts)
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}; expected one of {CONSTRAINT_KINDS}")
        if self.mode not in CONSTRAINT_MODES:
            raise ValueError(f"unknown constraint mode {self.mode!r}; expected one of {CONSTRAINT_MODES}")
        if not 0.0 < self.eta < 0.5:
            raise ValueError(f"eta must lie in (0, 0.5), got {self.eta!r}")
        if self.penalty_weight < 0.0:
            raise ValueError("penalty_weight must be nonnegative")
        object.__setattr__(self, "active_dims", tuple(int(i) for i in self.active_dims))

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def beta(self):
        """Margin coefficient -Phi^{-1}(eta); positive for eta < 0.5."""
        return -normal_quantile(self.eta)

    def dims_for(self, n_input_dims):
        dims = self.active_dims if self.active_dims else tuple(range(n_input_dims))
        for d in dims:
            if not 0 <= d < n_input_dims:
                raise IndexError(f"active dimension {d} out of range for d={n_input_dims}")
        return dims

    def with_point(self, x):
        """A new set with one location appended."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        pts = x if self.n_points == 0 else np.vstack([self.points, x])
        return dataclasses.replace(self, points=pts)


@dataclass(frozen=True)
class MarginReport:
    """Margins at the constraint points, most negative first in ``worst``.

    Monotone sets lay margins out dimension-major: all points for the first
    active dim, then all points for the next. ``worst`` is +inf for an empty
    report.
    """

    margins: np.ndarray
    violations: np.ndarray
    worst: float

    @classmethod
    def from_margins(cls, margins):
        margins = np.asarray(margins, dtype=float)
        violations = np.flatnonzero(margins < 0.0)
        worst = float(margins.min()) if margins.size else math.inf
        return cls(margins=margins, violations=violations, worst=worst)

    @property
    def all_satisfied(self):
        return self.violations.size == 0


def margin_values(y_star, s, beta, bound=0.0):
    """Lower-bound margins y* - beta*s - bound (vectorized)."""
    return np.asarray(y_star, dtype=float) - beta * np.asarray(s, dtype=float) - bound


def hinge_penalty(margins, weight):
    """Quadratic hinge weight * sum(max(0, -margin)^2); zero when all margins hold."""
    viol = np.minimum(np.asarray(margins, dtype=float), 0.0)
    return weight * float(viol @ viol)


class PenalizedObjective:
    """Sampling target for GP hyperparameters under a constraint set.

    ``potential`` and ``gradient`` take raw log-hyperparameter vectors so the
    sampler stays GP-agnostic. Ill-conditioned or out-of-range states are
    mapped to infinite energy (potential) or a non-finite force (gradient),
    both of which the chain treats as rejections.
    """

    def __init__(self, data, cset, core=None):
        self.data = data
        self.cset = cset
        self.core = core if core is not None else GpCore(data)

    def margin_report(self, hyper):
        cset = self.cset
        if cset.n_points == 0:
            return MarginReport.from_margins(np.empty(0))
        fit = self.core.fit(hyper)
        beta = cset.beta
        if cset.kind == VALUE_LOWER_BOUND:
            post = fit.posterior(cset.points)
            margins = margin_values(post.mean, post.std, beta, cset.bound)
        else:
            parts = []
            for dim in cset.dims_for(self.data.dim):
                dp = fit.derivative_posterior(cset.points, dim)
                parts.append(margin_values(dp.mean, dp.std, beta, 0.0))
            margins = np.concatenate(parts)
        return MarginReport.from_margins(margins)

    def potential_of(self, hyper):
        base = self.core.potential(hyper)
        if self.cset.n_points == 0:
            return base
        report = self.margin_report(hyper)
        if self.cset.mode == HARD:
            return base if report.all_satisfied else math.inf
        return base + hinge_penalty(report.margins, self.cset.penalty_weight)

    def gradient_of(self, hyper):
        """Force for the sampler: analytic base plus a finite-difference penalty term.

        Hard mode and feasible states use the unconstrained gradient exactly;
        in hard mode the barrier acts only at the MH step.
        """
        base = self.core.grad(hyper)
        cset = self.cset
        if cset.n_points == 0 or cset.mode == HARD or cset.penalty_weight == 0.0:
            return base
        if self.margin_report(hyper).all_satisfied:
            return base
        theta = hyper.vector
        pen = np.zeros(3)
        for j in range(3):
            step = np.zeros(3)
            step[j] = PENALTY_FD_STEP
            pen[j] = (self._penalty(theta + step) - self._penalty(theta - step)) / (2.0 * PENALTY_FD_STEP)
        return base + pen

    def _penalty(self, theta):
        report = self.margin_report(Hyperparams.from_vector(theta))
        return hinge_penalty(report.margins, self.cset.penalty_weight)

    def potential(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) > _THETA_LIMIT):
            return math.inf
        try:
            return self.potential_of(Hyperparams.from_vector(theta))
        except IllConditionedKernelError:
            return math.inf

    def gradient(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) > _THETA_LIMIT):
            return np.full(3, np.nan)
        try:
            return self.gradient_of(Hyperparams.from_vector(theta))
        except IllConditionedKernelError:
            return np.full(3, np.nan)


def margin(hyper, data, cset):
    """Margins of the constraint set under the model's posterior at ``hyper``."""
    return PenalizedObjective(data, cset).margin_report(hyper)


def violation_probability(y_star, s, bound=0.0):
    """Posterior probability that the latent value falls below ``bound``."""
    if not s > 0.0:
        raise ValueError("posterior std must be strictly positive")
    return normal_cdf((bound - y_star) / s)


def penalized_potential(hyper, data, cset):
    """Unconstrained potential plus the soft hinge penalty or the hard barrier."""
    return PenalizedObjective(data, cset).potential_of(hyper)


def penalized_gradient(hyper, data, cset):
    """Gradient of the penalized potential in log-hyperparameter space."""
    return PenalizedObjective(data, cset).gradient_of(hyper)
