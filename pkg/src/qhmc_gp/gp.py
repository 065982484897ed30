"""GP data model: marginal likelihood, its gradient, and predictive posteriors.

The sampling potential is the negative log marginal likelihood

    nll = 0.5 * (y^T K^{-1} y + log|K| + N log(2 pi))

of the centered observations plus a weak normal prior on the log
hyperparameters. Both are evaluated through a single Cholesky factorization
of the noisy training covariance.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.linalg.lapack

from . import kernels
from .kernels import (
    CovMatrix,
    Hyperparams,
    IllConditionedKernelError,
    pairwise_sq_dists,
)

LOG_2PI = math.log(2.0 * math.pi)

#: Std of the independent zero-mean normal priors on each log hyperparameter.
HYPERPRIOR_STD = 2.0


@dataclass
class Dataset:
    """Training inputs and observations; observations are stored centered.

    ``y_mean`` defaults to the training mean of ``y``; it is subtracted on
    load and re-added at prediction time. Pass ``y_mean=0.0`` to disable
    centering.
    """

    X: np.ndarray
    y: np.ndarray
    y_mean: float = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if y.size < 1:
            raise ValueError("dataset needs at least one observation")
        if X.shape[0] != y.size:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise ValueError("duplicate input rows are not allowed")
        if self.y_mean is None:
            self.y_mean = float(np.mean(y))
        self.y_mean = float(self.y_mean)
        self.X = X
        self.y = y - self.y_mean

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class PosteriorSummary:
    """Predictive mean and standard deviation at a set of query points."""

    mean: np.ndarray
    std: np.ndarray
    query_points: np.ndarray

    def __post_init__(self):
        if not (len(self.mean) == len(self.std) == len(self.query_points)):
            raise ValueError("mean, std and query_points must have equal lengths")
        if not np.all(np.isfinite(self.std)) or np.any(self.std < 0.0):
            raise ValueError("posterior std must be finite and nonnegative")

    @property
    def variance(self):
        return self.std**2


class GpFit:
    """Factorized training covariance for one (hyperparams, dataset) pair.

    Immutable once constructed (the inverse is memoized lazily), so a fit can
    be shared across threads for prediction.
    """

    def __init__(self, hyper, data, sq_dists=None):
        self.hyper = hyper
        self.data = data
        if sq_dists is None:
            sq_dists = pairwise_sq_dists(data.X, data.X)
        self.sq_dists = sq_dists
        l2 = hyper.length_scale**2
        s2 = hyper.sigma**2
        # squares of extreme log values overflow or underflow; treat those
        # states as unfactorizable rather than dividing by zero downstream
        if not (0.0 < l2 < math.inf and 0.0 < s2 < math.inf and hyper.sigma_n**2 < math.inf):
            raise IllConditionedKernelError("hyperparameters over/underflow when squared; kernel is degenerate")
        self.K_signal = s2 * np.exp(-sq_dists / (2.0 * l2))
        K = self.K_signal + hyper.sigma_n**2 * np.eye(data.n)

        # K is symmetric by construction; skip the public validation pass
        lower, jitter = kernels._cholesky_ladder(K, float(np.mean(np.diag(K))))
        self.cov = CovMatrix(entries=K, jitter_applied=jitter, chol_lower=lower)
        self.alpha = scipy.linalg.cho_solve((lower, True), data.y, check_finite=False)
        self._inv = None

    @property
    def chol_lower(self):
        return self.cov.chol_lower

    @property
    def jitter(self):
        return self.cov.jitter_applied

    @property
    def log_det(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol_lower))))

    def inverse(self):
        """Dense inverse of the (jittered) training covariance, from the Cholesky factor."""
        if self._inv is None:
            raw, info = scipy.linalg.lapack.dpotri(self.chol_lower, lower=1)
            if info != 0:
                raise IllConditionedKernelError(f"triangular inversion failed (info={info})")
            # dpotri fills the lower triangle; the upper one is still the
            # factor's zeros, so mirroring is a single add plus a diagonal fix
            diag = raw.diagonal().copy()
            full = raw + raw.T
            np.fill_diagonal(full, diag)
            self._inv = full
        return self._inv

    def _check_query(self, X_query):
        Xq = np.atleast_2d(np.asarray(X_query, dtype=float))
        if Xq.shape[1] != self.data.dim:
            raise ValueError(f"query dimension {Xq.shape[1]} does not match training dimension {self.data.dim}")
        if not np.all(np.isfinite(Xq)):
            raise ValueError("query points must be finite")
        return Xq

    def posterior(self, X_query):
        """Noise-free predictive mean and std of the latent function."""
        Xq = self._check_query(X_query)
        l2 = self.hyper.length_scale**2
        k_star = self.hyper.sigma**2 * np.exp(-pairwise_sq_dists(Xq, self.data.X) / (2.0 * l2))
        mean = k_star @ self.alpha + self.data.y_mean
        v = scipy.linalg.solve_triangular(self.chol_lower, k_star.T, lower=True, check_finite=False)
        var = np.maximum(self.hyper.sigma**2 - np.sum(v * v, axis=0), 0.0)
        return PosteriorSummary(mean=mean, std=np.sqrt(var), query_points=Xq)

    def derivative_posterior(self, X_query, dim):
        """Predictive mean and std of the partial derivative along ``dim``.

        Uses the value/derivative cross-covariance against the training
        observations; the constant prior mean contributes nothing here.
        """
        Xq = self._check_query(X_query)
        if not 0 <= dim < self.data.dim:
            raise IndexError(f"dimension index {dim} out of range for d={self.data.dim}")
        l2 = self.hyper.length_scale**2
        base = self.hyper.sigma**2 * np.exp(-pairwise_sq_dists(Xq, self.data.X) / (2.0 * l2))
        k_star = base * (self.data.X[None, :, dim] - Xq[:, None, dim]) / l2
        mean = k_star @ self.alpha
        v = scipy.linalg.solve_triangular(self.chol_lower, k_star.T, lower=True, check_finite=False)
        var = np.maximum(self.hyper.sigma**2 / l2 - np.sum(v * v, axis=0), 0.0)
        return PosteriorSummary(mean=mean, std=np.sqrt(var), query_points=Xq)


class GpCore:
    """Per-dataset state reused across many hyperparameter evaluations.

    Caches the pairwise squared distances once and memoizes the most recent
    fit, which the sampler's potential/gradient pair hits back to back. Not
    safe for concurrent mutation; give each chain its own core.
    """

    def __init__(self, data):
        self.data = data
        self.sq_dists = pairwise_sq_dists(data.X, data.X)
        self._memo_key = None
        self._memo_fit = None

    def fit(self, hyper):
        key = (hyper.log_sigma, hyper.log_l, hyper.log_sigma_n)
        if key != self._memo_key:
            self._memo_fit = GpFit(hyper, self.data, sq_dists=self.sq_dists)
            self._memo_key = key
        return self._memo_fit

    def nll(self, hyper):
        f = self.fit(hyper)
        return 0.5 * (float(self.data.y @ f.alpha) + f.log_det + self.data.n * LOG_2PI)

    def potential(self, hyper):
        return self.nll(hyper) + neg_log_hyperprior(hyper)

    def grad(self, hyper):
        """Gradient of the potential in (log sigma, log l, log sigma_n).

        Data term is 0.5 tr((K^{-1} - alpha alpha^T) dK/dtheta) chain-ruled
        into log space; the prior adds theta / HYPERPRIOR_STD^2.
        """
        f = self.fit(hyper)
        A = f.inverse() - np.outer(f.alpha, f.alpha)
        l2 = hyper.length_scale**2
        AK = A * f.K_signal
        g_sigma = float(np.sum(AK))
        g_l = 0.5 * float(np.sum(AK * self.sq_dists)) / l2
        g_noise = hyper.sigma_n**2 * float(np.trace(A))
        return np.array([g_sigma, g_l, g_noise]) + hyper.vector / HYPERPRIOR_STD**2


def neg_log_hyperprior(hyper):
    """Negative log density of independent N(0, HYPERPRIOR_STD^2) priors on the log hyperparameters."""
    v = hyper.vector / HYPERPRIOR_STD
    return 0.5 * float(v @ v) + 3.0 * (0.5 * LOG_2PI + math.log(HYPERPRIOR_STD))


def nll(hyper, data):
    """Negative log marginal likelihood of the centered observations."""
    return GpCore(data).nll(hyper)


def potential(hyper, data):
    """Sampling potential: nll plus the negative log hyperprior."""
    return GpCore(data).potential(hyper)


def nll_grad(hyper, data):
    """Gradient of the sampling potential in log-hyperparameter space."""
    return GpCore(data).grad(hyper)


def posterior(hyper, data, X_query):
    """Predictive posterior of the latent function at the query points."""
    return GpFit(hyper, data).posterior(X_query)


def derivative_posterior(hyper, data, X_query, dim):
    """Predictive posterior of the partial derivative along ``dim``."""
    return GpFit(hyper, data).derivative_posterior(X_query, dim)
