"""Independent reference computations used by the tests.

Nothing here imports the package's numerics; the oracles are built from
scipy distributions and quadrature only.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import simpson
from scipy.stats import multivariate_normal, norm


def random_mixture(rng: np.random.Generator, k: int, g: int):
    """Priors, means and well-conditioned covariances of a random mixture."""
    priors = rng.dirichlet(np.ones(k))
    means = rng.normal(0.0, 1.5, size=(k, g))
    covs = np.empty((k, g, g))
    for j in range(k):
        a = rng.normal(size=(g, g))
        covs[j] = a @ a.T / g + 0.2 * np.eye(g)
    return priors, means, covs


def conditional_moments_quadrature(priors, means, covs, x, n_grid: int = 6001):
    """Mean and variance of the last coordinate given the others, by quadrature.

    The joint density is evaluated on a grid of the target coordinate wide
    enough to hold every component's mass, then the normalising constant and
    the first two moments are integrated with Simpson's rule.
    """
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(covs[:, -1, -1])
    lo = float((means[:, -1] - 14 * sd).min())
    hi = float((means[:, -1] + 14 * sd).max())
    q = np.linspace(lo, hi, n_grid)
    pts = np.column_stack([np.tile(x, (n_grid, 1)), q])
    dens = np.zeros(n_grid)
    for p, m, c in zip(priors, means, covs):
        dens += p * multivariate_normal(m, c).pdf(pts)
    z = simpson(dens, x=q)
    mean = simpson(q * dens, x=q) / z
    var = simpson((q - mean) ** 2 * dens, x=q) / z
    return mean, var


def admissibility_probability(mean_a: float, mean_max: float, variance: float, lam: float) -> float:
    """P(mean_a >= lam * mean_max - |z|) for z ~ N(0, variance).

    The event fails iff |z| < lam * mean_max - mean_a = t, which for t > 0
    has probability 2 Phi(t / sd) - 1.
    """
    t = lam * mean_max - mean_a
    if t <= 0:
        return 1.0
    return 1.0 - (2.0 * norm.cdf(t / np.sqrt(variance)) - 1.0)
