"""Closed-form Gaussian solutions of the constant-coefficient equation.

Starting from a point mass at the origin, the density stays Gaussian:

* pure diffusion (drift 0, diffusion D): N(0, 2*D*t)
* pure drift (drift mu, diffusion 0) from N(0, sigma2): N(mu*t, sigma2)
* drift mu with diffusion D: N(mu*t, 2*D*t)

These serve as oracles for the solver, the estimators, and the
end-to-end pipeline tests, and back the `oracle` CLI subcommand.
"""

from __future__ import annotations

import numpy as np

from .density import DensityField
from .grid import Grid

__all__ = [
    "gaussian_density",
    "pure_diffusion_density",
    "pure_drift_density",
    "drift_diffusion_density",
]


def gaussian_density(grid: Grid, mean: float, variance: float, time_stamp: float) -> DensityField:
    """Normal pdf evaluated at the nodes, renormalized on the grid.

    The renormalization absorbs the (tiny, for a well-chosen grid)
    truncated tail mass so downstream mass checks hold exactly.
    """
    if not variance > 0.0:
        raise ValueError("variance must be > 0")
    x = grid.nodes
    vals = np.exp(-((x - mean) ** 2) / (2.0 * variance)) / np.sqrt(2.0 * np.pi * variance)
    return DensityField.normalized(grid, vals, time_stamp)


def pure_diffusion_density(grid: Grid, t: float, diffusion: float) -> DensityField:
    """Zero-drift solution at time t > 0: N(0, 2*D*t)."""
    if not (t > 0.0 and diffusion > 0.0):
        raise ValueError("need t > 0 and diffusion > 0")
    return gaussian_density(grid, 0.0, 2.0 * diffusion * t, t)


def pure_drift_density(grid: Grid, t: float, mu: float, sigma2: float) -> DensityField:
    """Zero-diffusion solution: the initial N(0, sigma2) shifted to mu*t."""
    return gaussian_density(grid, mu * t, sigma2, t)


def drift_diffusion_density(grid: Grid, t: float, mu: float, diffusion: float) -> DensityField:
    """Constant drift and diffusion from a point start: N(mu*t, 2*D*t)."""
    if not (t > 0.0 and diffusion > 0.0):
        raise ValueError("need t > 0 and diffusion > 0")
    return gaussian_density(grid, mu * t, 2.0 * diffusion * t, t)
