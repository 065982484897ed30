"""Hamiltonian Monte Carlo with a lognormal-resampled scalar mass, plus a fixed-mass baseline.

Each proposal draws a fresh mass m with log m ~ N(mu_m, sigma_m^2) (mass
matrix m*I), resamples momentum q ~ N(0, m*I), integrates the dynamics with
a leapfrog scheme, and applies a Metropolis-Hastings correction on the total
energy H(x, q) = U(x) + 0.5 q^T q / m. The same mass serves both endpoints
of one proposal. With sigma_m = 0 the sampler degenerates to plain HMC with
mass exp(mu_m).
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QhmcConfig:
    """Chain settings; defaults suit log-hyperparameter potentials at desk scale."""

    epsilon: float = 0.01
    n_leapfrog: int = 10
    mu_m: float = 0.0
    sigma_m: float = 1.0
    n_samples: int = 2000
    burn_in: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.n_leapfrog < 1:
            raise ValueError("n_leapfrog must be at least 1")
        if self.sigma_m < 0.0:
            raise ValueError("sigma_m must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")


@dataclass
class SampleChain:
    """Post-burn-in chain states with their potentials and per-iteration accept flags."""

    samples: np.ndarray
    potentials: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float

    def minimum_potential_sample(self):
        """The recorded state with the lowest potential (a MAP-style point estimate)."""
        return self.samples[int(np.argmin(self.potentials))]


def sample_mass(config, rng):
    """One draw of the scalar mass, m = exp(mu_m + sigma_m * z).

    sigma_m = 0 returns exp(mu_m) without consuming randomness, so a
    degenerate chain is bit-identical to the fixed-mass baseline.
    """
    if config.sigma_m == 0.0:
        return math.exp(config.mu_m)
    return math.exp(config.mu_m + config.sigma_m * rng.standard_normal())


def sample_momentum(mass, dim, rng):
    """Momentum draw from N(0, mass * I)."""
    return math.sqrt(mass) * rng.standard_normal(dim)


def leapfrog(x0, q0, mass, epsilon, n_steps, grad_U):
    """Integrate Hamilton's equations: half kick, n_steps-1 drift/kick pairs, drift, half kick.

    Returns the final (x, q), or None when a non-finite gradient aborts the
    trajectory (the caller should count that proposal as rejected).
    """
    x = np.array(x0, dtype=float)
    q = np.array(q0, dtype=float)
    g = grad_U(x)
    if not np.all(np.isfinite(g)):
        return None
    q = q - 0.5 * epsilon * g
    for _ in range(n_steps - 1):
        x = x + (epsilon / mass) * q
        g = grad_U(x)
        if not np.all(np.isfinite(g)):
            return None
        q = q - epsilon * g
    x = x + (epsilon / mass) * q
    g = grad_U(x)
    if not np.all(np.isfinite(g)):
        return None
    q = q - 0.5 * epsilon * g
    return x, q


def mh_accept(h_current, h_proposed, rng):
    """Metropolis-Hastings test on total energies.

    Accepts with probability min(1, exp(h_current - h_proposed)); an infinite
    or NaN proposed energy always rejects, which is how hard constraint
    barriers act. One uniform draw is consumed per call.
    """
    u = rng.uniform()
    if math.isnan(h_proposed) or h_proposed == math.inf:
        return False
    if h_proposed <= h_current:
        return True
    return u < math.exp(h_current - h_proposed)


def _run_loop(potential, gradient, init, config, mass_of, rng):
    x = np.asarray(init, dtype=float).ravel().copy()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite and nonempty")
    u_x = float(potential(x))
    n_total = config.burn_in + config.n_samples
    samples = np.empty((config.n_samples, x.size))
    potentials = np.empty(config.n_samples)
    accepted = np.zeros(n_total, dtype=bool)
    # divergent trajectories legitimately produce inf/nan and get rejected;
    # suppress the numpy warnings they would otherwise spray
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n_total):
            mass = mass_of(rng)
            q = sample_momentum(mass, x.size, rng)
            proposal = leapfrog(x, q, mass, config.epsilon, config.n_leapfrog, gradient)
            if proposal is not None:
                x_new, q_new = proposal
                h_cur = u_x + 0.5 * float(q @ q) / mass
                u_new = float(potential(x_new))
                h_new = u_new + 0.5 * float(q_new @ q_new) / mass
                if mh_accept(h_cur, h_new, rng):
                    x = x_new
                    u_x = u_new
                    accepted[t] = True
            if t >= config.burn_in:
                samples[t - config.burn_in] = x
                potentials[t - config.burn_in] = u_x
    if not accepted.any():
        raise RuntimeError(
            "no proposals were accepted over the whole run; try a smaller epsilon or fewer leapfrog steps"
        )
    return SampleChain(
        samples=samples,
        potentials=potentials,
        accepted=accepted,
        acceptance_rate=float(np.mean(accepted)),
    )


def run_chain(potential, gradient, init, config, rng=None):
    """Run one mass-randomized HMC chain; fully deterministic given the seed."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _run_loop(potential, gradient, init, config, lambda r: sample_mass(config, r), rng)


def run_hmc_chain(potential, gradient, init, config, mass=None, rng=None):
    """Fixed-mass baseline: the identical loop with the mass pinned (default exp(mu_m))."""
    m = math.exp(config.mu_m) if mass is None else float(mass)
    if not m > 0.0:
        raise ValueError("mass must be positive")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _run_loop(potential, gradient, init, config, lambda r: m, rng)
