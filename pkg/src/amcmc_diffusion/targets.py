"""One-dimensional target densities and the Metropolis acceptance rule."""
from dataclasses import dataclass
from typing import Callable

import numpy as np


class DensityError(ValueError):
    """Raised when a target's log-density is not finite at a queried point."""


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalised density ``psi`` given by its log and its score ``psi'/psi``.

    Both callables must accept floats and numpy arrays elementwise.
    """

    log_density: Callable
    score: Callable
    name: str


def _normal_log_density(x):
    return -0.5 * np.multiply(x, x)


def _normal_score(x):
    return np.negative(x)


def standard_normal():
    return TargetDensity(_normal_log_density, _normal_score, "standard_normal")


def log_acceptance_ratio(target, x, y):
    """``log psi(y) - log psi(x)``; raises :class:`DensityError` if non-finite."""
    lx = target.log_density(x)
    ly = target.log_density(y)
    if not (np.all(np.isfinite(lx)) and np.all(np.isfinite(ly))):
        raise DensityError("density evaluation failed")
    return np.subtract(ly, lx)


def acceptance_probability(target, x, y):
    """Metropolis probability ``min(1, psi(y)/psi(x))``, evaluated in log space.

    Works elementwise on arrays; scalar inputs give a Python float.
    """
    alpha = np.exp(np.minimum(log_acceptance_ratio(target, x, y), 0.0))
    if np.ndim(alpha) == 0:
        return float(alpha)
    return alpha
