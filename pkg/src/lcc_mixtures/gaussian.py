"""Stable Gaussian log-densities, sampling and seeded random streams."""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg

from lcc_mixtures.custom_exceptions import DimensionMismatchError, FactorizationError

LOG_2PI = float(np.log(2 * np.pi))


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Lower-triangular factor L of a covariance matrix (L @ L.T) and its log-determinant."""

    lower: np.ndarray
    log_det: float

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def cholesky_factor(covariance) -> CholeskyFactor:
    """
    Factor a covariance matrix.

    A failed factorization means the matrix escaped the variance bounds
    upstream; it is reported, not regularized.

    Raises:
        FactorizationError: If the matrix is not numerically positive definite.
    """
    covariance = np.atleast_2d(np.asarray(covariance, dtype=float))
    try:
        lower = scipy.linalg.cholesky(covariance, lower=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise FactorizationError(f"Cholesky factorization failed: {e}") from e
    lower.setflags(write=False)
    # log|Sigma| = 2 * sum(log(diag(L)))
    return CholeskyFactor(lower, float(2.0 * np.sum(np.log(np.diag(lower)))))


def log_gaussian_density(x, mean, chol: CholeskyFactor) -> Union[float, np.ndarray]:
    """
    Log-density of N(mean, L L^T) at one point or at every row of a matrix.

    Args:
        x: A d-vector, or an n x d matrix of points.
        mean: The d-dimensional mean.
        chol (CholeskyFactor): Factor of the covariance.

    Returns:
        float for a single point, otherwise an array of n log-densities.

    Raises:
        DimensionMismatchError: If x, mean and the factor disagree on d.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    single = x.ndim <= 1
    points = x.reshape(1, -1) if single else x
    if points.shape[1] != mean.size or mean.size != chol.d:
        raise DimensionMismatchError(
            f"Point dimension {points.shape[1]}, mean dimension {mean.size}, covariance dimension {chol.d}"
        )
    # soln = L^-1 (x - mu), so the Mahalanobis term is |soln|^2
    soln = scipy.linalg.solve_triangular(chol.lower, (points - mean).T, lower=True)
    values = -0.5 * (chol.d * LOG_2PI + chol.log_det + np.sum(soln**2, axis=0))
    return float(values[0]) if single else values


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream identified by (seed, *keys)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, *[int(k) for k in keys]]))


def sample_gaussian(mean, chol: CholeskyFactor, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """
    Draw mean + L z with z standard normal.

    Args:
        mean: The d-dimensional mean.
        chol (CholeskyFactor): Factor of the covariance.
        rng (np.random.Generator): Generator owned by the caller.
        size (int, optional): Number of draws; a single d-vector when omitted.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    if mean.size != chol.d:
        raise DimensionMismatchError(f"Mean dimension {mean.size} does not match covariance dimension {chol.d}")
    z = rng.standard_normal((1 if size is None else size, chol.d))
    draws = mean + z @ chol.lower.T
    return draws[0] if size is None else draws
