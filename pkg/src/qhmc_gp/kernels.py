"""Squared-exponential kernel, its derivative forms, and stabilized factorization."""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist


class IllConditionedKernelError(np.linalg.LinAlgError):
    """Covariance matrix could not be factorized even at the largest jitter level."""


#: Diagonal jitter escalation ladder, as multiples of mean(diag(A)).
JITTER_LEVELS = (1e-10, 1e-8, 1e-6, 1e-4)

# exp() overflows to inf just past 709; keep a little margin either side so
# both the value and its square stay representable.
_LOG_LIMIT = 700.0


@dataclass(frozen=True)
class Hyperparams:
    """Kernel hyperparameters in log space: signal std, length-scale, noise std.

    Storing logs keeps the linear-scale values strictly positive by
    construction. An effectively noise-free model is expressed with a very
    negative ``log_sigma_n`` (e.g. -700, where sigma_n**2 underflows to 0).
    """

    log_sigma: float
    log_l: float
    log_sigma_n: float

    def __post_init__(self):
        for name in ("log_sigma", "log_l", "log_sigma_n"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ValueError(f"{name}={value!r} must be a finite number")
            if abs(value) > _LOG_LIMIT:
                raise ValueError(f"{name}={value!r} exceeds the finite range |log| <= {_LOG_LIMIT:g}")

    @classmethod
    def from_linear(cls, sigma, length_scale, sigma_n):
        """Build from linear-scale values, which must be strictly positive."""
        if min(sigma, length_scale, sigma_n) <= 0.0:
            raise ValueError("sigma, length_scale and sigma_n must be strictly positive")
        return cls(math.log(sigma), math.log(length_scale), math.log(sigma_n))

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (3,):
            raise ValueError(f"expected a 3-vector (log sigma, log l, log sigma_n), got shape {theta.shape}")
        return cls(float(theta[0]), float(theta[1]), float(theta[2]))

    @property
    def vector(self):
        return np.array([self.log_sigma, self.log_l, self.log_sigma_n])

    @property
    def sigma(self):
        return math.exp(self.log_sigma)

    @property
    def length_scale(self):
        return math.exp(self.log_l)

    @property
    def sigma_n(self):
        return math.exp(self.log_sigma_n)


@dataclass(frozen=True)
class CovMatrix:
    """A symmetric covariance matrix together with its stabilized factorization."""

    entries: np.ndarray
    jitter_applied: float
    chol_lower: np.ndarray

    @classmethod
    def factorized(cls, entries):
        lower, jitter = cholesky_with_jitter(entries)
        return cls(entries=entries, jitter_applied=jitter, chol_lower=lower)


def _check_pair(x, x_prime):
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(x_prime, dtype=float).ravel()
    if x.shape != xp.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {xp.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
        raise ValueError("kernel inputs must be finite")
    return x, xp


def se_kernel(x, x_prime, hyper, include_noise=False):
    """Squared-exponential covariance sigma^2 exp(-|x - x'|^2 / (2 l^2)).

    Noise sits on the Kronecker delta of point *indices*, which only the
    caller can know, so ``include_noise=True`` asserts that this pair is one
    training point matched with itself and adds sigma_n^2.
    """
    x, xp = _check_pair(x, x_prime)
    d2 = float(np.sum((x - xp) ** 2))
    value = hyper.sigma**2 * math.exp(-d2 / (2.0 * hyper.length_scale**2))
    if include_noise:
        value += hyper.sigma_n**2
    return value


def se_kernel_dxp(x, x_prime, hyper, i):
    """Derivative of the noise-free kernel in the i-th coordinate of ``x_prime``.

    Equals sigma^2 exp(-|x - x'|^2 / (2 l^2)) (x_i - x'_i) / l^2; this is the
    cross-covariance between a function value at ``x`` and a partial
    derivative observed at ``x_prime``.
    """
    x, xp = _check_pair(x, x_prime)
    if not 0 <= i < x.size:
        raise IndexError(f"dimension index {i} out of range for d={x.size}")
    l2 = hyper.length_scale**2
    d2 = float(np.sum((x - xp) ** 2))
    return hyper.sigma**2 * math.exp(-d2 / (2.0 * l2)) * (x[i] - xp[i]) / l2


def se_kernel_dxdxp(x, x_prime, hyper, i):
    """Mixed second derivative of the noise-free kernel in coordinate i of both arguments.

    Equals sigma^2 exp(-|x - x'|^2 / (2 l^2)) (1/l^2 - (x_i - x'_i)^2 / l^4);
    the prior covariance between two partial-derivative observations.
    """
    x, xp = _check_pair(x, x_prime)
    if not 0 <= i < x.size:
        raise IndexError(f"dimension index {i} out of range for d={x.size}")
    l2 = hyper.length_scale**2
    d2 = float(np.sum((x - xp) ** 2))
    delta = x[i] - xp[i]
    return hyper.sigma**2 * math.exp(-d2 / (2.0 * l2)) * (1.0 / l2 - delta**2 / l2**2)


def pairwise_sq_dists(X, X_prime):
    """Matrix of squared Euclidean distances between the rows of two point sets."""
    return cdist(X, X_prime, "sqeuclidean")


def cov_matrix(X, X_prime, hyper, include_noise=False):
    """Kernel matrix over two point sets.

    Noise is added only on the diagonal, and only when ``X`` and ``X_prime``
    are the same set: the Kronecker delta acts on point indices, so
    coincident points from different sets never pick up noise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xp = np.atleast_2d(np.asarray(X_prime, dtype=float))
    if X.size == 0 or Xp.size == 0:
        raise ValueError("empty input point set")
    if X.shape[1] != Xp.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Xp.shape[1]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Xp))):
        raise ValueError("kernel inputs must be finite")
    K = hyper.sigma**2 * np.exp(-pairwise_sq_dists(X, Xp) / (2.0 * hyper.length_scale**2))
    if include_noise and X.shape == Xp.shape and np.array_equal(X, Xp):
        K[np.diag_indices_from(K)] += hyper.sigma_n**2
    return K


def cholesky_with_jitter(A):
    """Lower Cholesky factor of ``A + j*I``, escalating j until factorization succeeds.

    The jitter starts at 0 and walks up JITTER_LEVELS scaled by mean(diag(A)).
    Returns (lower_factor, jitter_applied); failure at the top of the ladder
    raises IllConditionedKernelError.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    scale = float(np.mean(np.diag(A)))
    if not np.allclose(A, A.T, rtol=1e-8, atol=1e-12 * max(abs(scale), 1.0)):
        raise ValueError("matrix is not symmetric")
    return _cholesky_ladder(A, scale)


def _cholesky_ladder(A, scale):
    # hot path shared with matrices that are symmetric by construction
    if scale <= 0.0:
        scale = 1.0
    try:
        return scipy.linalg.cholesky(A, lower=True, check_finite=False), 0.0
    except scipy.linalg.LinAlgError:
        pass
    for level in JITTER_LEVELS:
        jitter = level * scale
        target = A + jitter * np.eye(A.shape[0])
        try:
            lower = scipy.linalg.cholesky(target, lower=True, overwrite_a=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            continue
        return lower, jitter
    raise IllConditionedKernelError(
        f"Cholesky failed even with jitter {JITTER_LEVELS[-1]:g}*mean(diag); kernel matrix is ill-conditioned"
    )
