"""Collocation-point sampling for the training loops.

All draws go through a caller-supplied ``numpy.random.Generator`` so that
training runs are reproducible from a single seed.
"""

import numpy as np


def latin_hypercube(n, dim, rng):
    """n stratified samples in [0,1]^dim: one point per row-permuted stratum."""
    if n < 1:
        raise ValueError("need at least one sample")
    out = np.empty((n, dim))
    for d in range(dim):
        strata = (rng.permutation(n) + rng.uniform(size=n)) / n
        out[:, d] = strata
    return out


def log_time(xi, t_min, t_max, eps):
    """Map uniform draws to times spaced logarithmically over [t_min, t_max].

    Points concentrate near t_min, where the reaction transients live.
    """
    lo = np.log(t_min + eps)
    hi = np.log(t_max)
    return np.exp(lo + xi * (hi - lo))


def sample_ivp(n, t_max, eps, rng):
    """Log-uniform collocation times for the reactor problem."""
    return log_time(rng.uniform(size=n), 0.0, t_max, eps)


def sample_bvp(n, rng):
    """Uniform mixture-fraction collocation points on [0, 1]."""
    return rng.uniform(size=n)


def sample_pde(n, t_max, rng):
    """Latin-hypercube (t, Z) collocation points on [0, t_max] x [0, 1]."""
    u = latin_hypercube(n, 2, rng)
    return u[:, 0] * t_max, u[:, 1]


def sample_alpha(alpha_min, alpha_max, rng):
    """One log-uniform strain-rate draw for a parametric epoch."""
    if not (0 < alpha_min <= alpha_max):
        raise ValueError("need 0 < alpha_min <= alpha_max")
    return float(np.exp(rng.uniform(np.log(alpha_min), np.log(alpha_max))))
