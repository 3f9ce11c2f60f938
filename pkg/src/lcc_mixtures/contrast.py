"""
Contrast-level quantities of a Gaussian mixture on a dataset.

Everything here is derived from the n x K matrix of log(pi_k) + log(phi(x_i; omega_k)):
responsibilities (tau), the observed log-likelihood, the entropy of the
responsibilities, the conditional classification log-likelihood
Lcc = log L - Ent, the classification log-likelihood for given labels, the
MAP rule and the alpha-weighted contrast.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import logsumexp

from lcc_mixtures.custom_exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    LabelMismatchError,
)
from lcc_mixtures.gaussian import cholesky_factor, log_gaussian_density
from lcc_mixtures.models import LabelMatrix, MixtureParams, as_data_matrix

logger = logging.getLogger(__name__)

# t * log(t) is taken as 0 below this magnitude
H_ZERO_THRESHOLD = 1e-300


@dataclass(frozen=True, eq=False)
class ResponsibilityMatrix:
    """
    Posterior component probabilities tau_ik with the log-densities they came from.

    Attributes:
        entries: tau, shape (n, K); rows sum to 1.
        log_weighted: log(pi_k) + log(phi(x_i; omega_k)), shape (n, K).
        log_norm: Row-wise log-sum-exp of log_weighted, i.e. log f(x_i; theta).
    """

    entries: np.ndarray
    log_weighted: np.ndarray
    log_norm: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]

    @property
    def log_entries(self) -> np.ndarray:
        """log tau, computed from the log-densities rather than from tau."""
        return np.minimum(self.log_weighted - self.log_norm[:, None], 0.0)

    def entropy_rows(self) -> np.ndarray:
        """h_K(tau_i.) for every observation."""
        tau = self.entries
        with np.errstate(invalid="ignore"):
            terms = np.where(tau > H_ZERO_THRESHOLD, -tau * self.log_entries, 0.0)
        return terms.sum(axis=1) + 0.0


@dataclass(frozen=True)
class ContrastValues:
    log_lik: float
    entropy: float
    lcc: float


def weighted_log_densities(params: MixtureParams, data) -> np.ndarray:
    """n x K matrix of log(pi_k) + log(phi(x_i; mu_k, Sigma_k))."""
    data = as_data_matrix(data)
    if data.shape[1] != params.d:
        raise DimensionMismatchError(f"Data has d={data.shape[1]} but the mixture has d={params.d}")
    out = np.empty((data.shape[0], params.K))
    for k, (mean, covariance) in enumerate(params.components):
        out[:, k] = log_gaussian_density(data, mean, cholesky_factor(covariance))
    with np.errstate(divide="ignore"):
        out += np.log(params.weights)
    return out


def responsibilities(params: MixtureParams, data) -> ResponsibilityMatrix:
    """
    Responsibilities tau_ik = pi_k phi(x_i; omega_k) / sum_l pi_l phi(x_i; omega_l).

    Computed with log-sum-exp stabilization.

    Raises:
        NonFiniteValueError: If the data contain NaN or infinite values.
    """
    log_weighted = weighted_log_densities(params, data)
    log_norm = logsumexp(log_weighted, axis=1)
    entries = np.exp(log_weighted - log_norm[:, None])
    return ResponsibilityMatrix(entries, log_weighted, log_norm)


def log_likelihood(params: MixtureParams, data) -> float:
    """Observed-data log-likelihood log L(theta; X)."""
    return float(np.sum(responsibilities(params, data).log_norm))


def entropy_contributions(params: MixtureParams, data) -> np.ndarray:
    """Per-observation entropy h_K(tau_i.) of the responsibilities."""
    return responsibilities(params, data).entropy_rows()


def entropy(params: MixtureParams, data) -> float:
    """Ent(theta; X) = -sum_i sum_k tau_ik log tau_ik, a value in [0, n log K]."""
    return float(np.sum(entropy_contributions(params, data)))


def contrast_from_responsibilities(resp: ResponsibilityMatrix) -> ContrastValues:
    log_lik = float(np.sum(resp.log_norm))
    ent = float(np.sum(resp.entropy_rows()))
    return ContrastValues(log_lik=log_lik, entropy=ent, lcc=log_lik - ent)


def conditional_classification_loglik(params: MixtureParams, data) -> ContrastValues:
    """
    Conditional classification log-likelihood Lcc = log L - Ent, with both parts.

    This is the expectation of the complete-data log-likelihood given the
    observations; for K = 1 it equals log L.
    """
    return contrast_from_responsibilities(responsibilities(params, data))


def classification_loglik(params: MixtureParams, data, labels: LabelMatrix) -> float:
    """
    Classification log-likelihood log Lc(theta; (X, Z)) = sum_i sum_k Z_ik (log pi_k + log phi_ik).

    Raises:
        LabelMismatchError: If the labels do not match the data length or K.
    """
    log_weighted = weighted_log_densities(params, data)
    if labels.entries.shape != log_weighted.shape:
        raise LabelMismatchError(
            f"Labels have shape {labels.entries.shape}, expected {log_weighted.shape}"
        )
    return float(np.sum(np.where(labels.entries == 1, log_weighted, 0.0)))


def map_classify(params: MixtureParams, data) -> np.ndarray:
    """MAP labels argmax_k tau_ik; ties go to the smallest component index."""
    return np.argmax(weighted_log_densities(params, data), axis=1)


def weighted_contrast(alpha: float, params: MixtureParams, data) -> float:
    """
    alpha * log L - (1 - alpha) * Ent.

    alpha = 1 gives the log-likelihood and alpha = 1/2 gives Lcc / 2.

    Raises:
        ConfigurationError: If alpha is outside [0, 1].
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in [0, 1], got {alpha}")
    values = conditional_classification_loglik(params, data)
    return alpha * values.log_lik - (1.0 - alpha) * values.entropy


def h(t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    h(t) = -t log t on [0, 1], with h(0) = 0.

    Raises:
        ConfigurationError: If t is outside [0, 1].
    """
    values = np.asarray(t, dtype=float)
    if np.any(values < 0) or np.any(values > 1) or not np.all(np.isfinite(values)):
        raise ConfigurationError(f"h is defined on [0, 1], got {t}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(values > H_ZERO_THRESHOLD, -values * np.log(values), 0.0) + 0.0
    return float(out) if out.ndim == 0 else out


def h_K(t) -> float:
    """h_K(t_1, ..., t_K) = sum_k h(t_k); maximal (log K) at the uniform vector."""
    return float(np.sum(h(np.asarray(t, dtype=float).reshape(-1))))
