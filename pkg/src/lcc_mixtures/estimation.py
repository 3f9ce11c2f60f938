"""
Fitting Gaussian mixtures by maximum likelihood (EM) and by maximum
conditional classification likelihood (MLccE).

MLccE runs are warm-started from the EM solution of the same restart and
climb Lcc by projected gradient ascent with a backtracking line search in
unconstrained coordinates (see ``Reparameterization``).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import expit, logit, logsumexp

from lcc_mixtures._logging import NUMERIC_ISSUES_LVL_NUM
from lcc_mixtures.contrast import (
    H_ZERO_THRESHOLD,
    ContrastValues,
    ResponsibilityMatrix,
    conditional_classification_loglik,
    contrast_from_responsibilities,
    responsibilities,
    weighted_log_densities,
)
from lcc_mixtures.custom_exceptions import (
    BoundaryError,
    ConfigurationError,
    DegenerateDataError,
    DimensionMismatchError,
    FactorizationError,
    InsufficientDataError,
    InvalidParametersError,
)
from lcc_mixtures.gaussian import derive_rng
from lcc_mixtures.models import (
    CovarianceStructure,
    MixtureParams,
    ModelFamily,
    ModelSpec,
    Proportions,
    as_data_matrix,
    project_components,
    project_to_bounds,
)

logger = logging.getLogger(__name__)

# A component whose total responsibility drops below this fraction of n is re-seeded
COLLAPSE_FRACTION = 1e-8
# Sigmoid-mapped coordinates are kept this far from the ends of their interval
INTERIOR_MARGIN = 1e-12


class InitScheme(Enum):
    RANDOM_RESPONSIBILITIES = "random_responsibilities"
    KMEANS_PP = "kmeans_pp"


class Estimator(Enum):
    MLE = "mle"
    MLCCE = "mlcce"


@dataclass(frozen=True)
class FitConfig:
    """
    Settings shared by both estimators.

    Args:
        n_restarts (int): Number of seeded restarts; the best one is kept.
        max_em_iters (int): EM iteration cap.
        em_tol (float): Stop EM when the relative log-likelihood change falls below this.
        max_grad_iters (int): Gradient-ascent iteration cap for MLccE.
        grad_tol (float): Stop the ascent when the sup-norm of the per-observation gradient falls below this.
        seed (int): Master seed; restart r uses a stream derived from (seed, r).
        init_scheme (InitScheme): How restarts are initialized.
        max_backtracks (int): Line-search halvings before a step is declared failed.
        armijo (float): Sufficient-increase constant of the line search.
        initial_step (float): First trial step of every line search.
        ascent_ftol (float): Stop the ascent when an accepted step gains less than this (relative).
        max_rescues (int): Collapsed-component re-seedings allowed per EM run.
    """

    n_restarts: int = 10
    max_em_iters: int = 500
    em_tol: float = 1e-8
    max_grad_iters: int = 500
    grad_tol: float = 1e-6
    seed: int = 0
    init_scheme: InitScheme = InitScheme.KMEANS_PP
    max_backtracks: int = 40
    armijo: float = 1e-4
    initial_step: float = 1.0
    ascent_ftol: float = 1e-13
    max_rescues: int = 3

    def __post_init__(self):
        object.__setattr__(self, "init_scheme", InitScheme(self.init_scheme))
        for name in ("n_restarts", "max_em_iters", "max_grad_iters", "max_backtracks"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("em_tol", "grad_tol", "armijo", "initial_step", "ascent_ftol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_rescues < 0:
            raise ConfigurationError("max_rescues cannot be negative")


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    A fitted mixture and how it was obtained.

    Attributes:
        params: Fitted parameters (inside the family bounds).
        contrast: log L, Ent and Lcc at ``params`` on the fitted data.
        converged: Whether the optimizer met its stopping rule.
        n_iters: Iterations of the estimator's own optimizer.
        restart_index: The restart that produced this result.
        estimator: MLE or MLCCE.
        spec: The model that was fitted.
        map_log_tau: sum_i log tau_{i, zhat_i} at the MAP labels.
        loglik_trace: EM log-likelihood after every iteration.
        clamped_trace: Whether a bound clamp or rescue fired at each EM iteration.
        rescues: Collapsed components re-seeded during EM.
    """

    params: MixtureParams
    contrast: ContrastValues
    converged: bool
    n_iters: int
    restart_index: int
    estimator: Estimator
    spec: ModelSpec
    map_log_tau: float
    loglik_trace: Tuple[float, ...] = ()
    clamped_trace: Tuple[bool, ...] = ()
    rescues: int = 0


@dataclass
class _EmRun:
    params: MixtureParams
    resp: ResponsibilityMatrix
    converged: bool
    n_iters: int
    trace: List[float]
    clamps: List[bool]
    rescues: int
    restart: int


def _check_data(data, spec: ModelSpec) -> np.ndarray:
    X = as_data_matrix(data)
    n, d = X.shape
    if d != spec.d:
        raise DimensionMismatchError(f"Data has d={d} but the model has d={spec.d}")
    if n < spec.K:
        raise InsufficientDataError(f"Need at least K={spec.K} observations, got {n}")
    if np.all(X == X[0]):
        raise DegenerateDataError("All observations are identical; the scatter is degenerate")
    return X


def _kmeans_pp_centers(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    first = rng.integers(n)
    centers = [X[first]]
    d2 = np.sum((X - X[first]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _initial_responsibilities(X: np.ndarray, K: int, scheme: InitScheme, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    if K == 1:
        return np.ones((n, 1))
    if scheme is InitScheme.RANDOM_RESPONSIBILITIES:
        return rng.dirichlet(np.ones(K), size=n)
    centers = _kmeans_pp_centers(X, K, rng)
    distances = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    tau = np.zeros((n, K))
    tau[np.arange(n), np.argmin(distances, axis=1)] = 1.0
    return tau


def _structured(scatter: np.ndarray, structure: CovarianceStructure) -> np.ndarray:
    d = scatter.shape[-1]
    if structure is CovarianceStructure.FULL:
        return 0.5 * (scatter + np.swapaxes(scatter, -1, -2))
    diagonal = np.diagonal(scatter, axis1=-2, axis2=-1)
    if structure is CovarianceStructure.SPHERICAL:
        diagonal = np.repeat(diagonal.mean(axis=-1, keepdims=True), d, axis=-1)
    out = np.zeros_like(scatter)
    out[..., np.arange(d), np.arange(d)] = diagonal
    return out


def _m_step(X: np.ndarray, tau: np.ndarray, spec: ModelSpec, rng: np.random.Generator):
    """
    Weighted-moment updates for the family, followed by projection.

    Returns:
        (params, clamped, rescued): The new parameters, whether the projection
        moved the raw estimates, and whether a collapsed component was re-seeded.
    """
    n, d = X.shape
    K = spec.K
    family = spec.family
    identity = np.eye(d)
    nk = tau.sum(axis=0)

    if family.symmetric_pair:
        half = (tau[:, 0] - tau[:, 1]) @ X / n
        residual = tau[:, 0] * np.sum((X - half) ** 2, axis=1) + tau[:, 1] * np.sum((X + half) ** 2, axis=1)
        variance = residual.sum() / (n * d)
        weights = np.full(2, 0.5)
        means = np.array([half, -half])
        covariances = np.array([variance * identity, variance * identity])
        collapsed = np.zeros(K, dtype=bool)
    else:
        collapsed = nk < COLLAPSE_FRACTION * n
        safe = np.where(collapsed, 1.0, nk)
        weights = nk / n if family.proportions is Proportions.FREE else np.full(K, 1.0 / K)
        means = (tau.T @ X) / safe[:, None]
        covariances = np.empty((K, d, d))
        for k in range(K):
            diff = X - means[k]
            covariances[k] = (tau[:, k, None] * diff).T @ diff / safe[k]
        structure = family.covariance_structure
        if structure is CovarianceStructure.DIAGONAL_EQUAL_VOLUME:
            # [lambda B_k]: B_k = diag(W_k) / |diag(W_k)|^(1/d), lambda = sum_k |diag(W_k)|^(1/d) / n
            scatter = np.diagonal(covariances, axis1=1, axis2=2) * nk[:, None]
            log_scatter = np.log(np.maximum(scatter, np.finfo(float).tiny))
            volume = np.exp(log_scatter.mean(axis=1))
            shape = np.exp(log_scatter - log_scatter.mean(axis=1, keepdims=True))
            scale = volume.sum() / n
            covariances = np.zeros((K, d, d))
            covariances[:, np.arange(d), np.arange(d)] = scale * shape
        else:
            covariances = _structured(covariances, structure)

    rescued = bool(collapsed.any())
    if rescued:
        overall = _structured(np.atleast_2d(np.cov(X.T, bias=True)), family.covariance_structure)
        for k in np.flatnonzero(collapsed):
            means[k] = X[rng.integers(n)]
            covariances[k] = overall
            weights[k] = 1.0 / K
        weights = weights / weights.sum()

    projected = project_components(weights, means, covariances, family)
    clamped = not all(np.array_equal(a, b) for a, b in zip(projected, (weights, means, covariances)))
    return MixtureParams(*projected), clamped, rescued


def _run_em(X: np.ndarray, spec: ModelSpec, config: FitConfig, restart: int) -> _EmRun:
    rng = derive_rng(config.seed, restart)
    tau = _initial_responsibilities(X, spec.K, config.init_scheme, rng)
    params, clamped, rescued = _m_step(X, tau, spec, rng)
    resp = responsibilities(params, X)
    log_lik = float(np.sum(resp.log_norm))
    trace, clamps = [log_lik], [clamped or rescued]
    rescues = 0
    converged = False
    n_iters = 0
    for iteration in range(1, config.max_em_iters + 1):
        new_params, clamped, rescued = _m_step(X, resp.entries, spec, rng)
        if rescued:
            if rescues >= config.max_rescues:
                logger.log(
                    NUMERIC_ISSUES_LVL_NUM,
                    f"EM K={spec.K} restart {restart}: component collapsed after {rescues} rescues; giving up",
                )
                break
            rescues += 1
            logger.log(
                NUMERIC_ISSUES_LVL_NUM,
                f"EM K={spec.K} restart {restart}: re-seeded a collapsed component at iteration {iteration}",
            )
        params = new_params
        resp = responsibilities(params, X)
        new_log_lik = float(np.sum(resp.log_norm))
        trace.append(new_log_lik)
        clamps.append(clamped or rescued)
        n_iters = iteration
        if not rescued and abs(new_log_lik - log_lik) <= config.em_tol * abs(log_lik):
            converged = True
            break
        log_lik = new_log_lik
    if not converged:
        logger.warning(f"EM K={spec.K} restart {restart} did not converge in {n_iters} iterations")
    logger.debug(f"EM K={spec.K} restart {restart}: log L = {trace[-1]:.6f} after {n_iters} iterations")
    return _EmRun(params, resp, converged, n_iters, trace, clamps, rescues, restart)


def _map_log_tau(resp: ResponsibilityMatrix) -> float:
    labels = np.argmax(resp.log_weighted, axis=1)
    return float(np.sum(resp.log_entries[np.arange(resp.n), labels]))


def _em_result(run: _EmRun, spec: ModelSpec) -> FitResult:
    return FitResult(
        params=run.params,
        contrast=contrast_from_responsibilities(run.resp),
        converged=run.converged,
        n_iters=run.n_iters,
        restart_index=run.restart,
        estimator=Estimator.MLE,
        spec=spec,
        map_log_tau=_map_log_tau(run.resp),
        loglik_trace=tuple(run.trace),
        clamped_trace=tuple(run.clamps),
        rescues=run.rescues,
    )


def _best(results: List[FitResult], key) -> FitResult:
    # Strict improvement only, so exact ties keep the smallest restart index.
    best = results[0]
    for result in results[1:]:
        if key(result) > key(best):
            best = result
    return best


def fit_mle_em(data, spec: ModelSpec, config: Optional[FitConfig] = None) -> FitResult:
    """
    Maximum likelihood fit by EM with seeded restarts.

    Args:
        data: n x d observations.
        spec (ModelSpec): Family, K and d.
        config (FitConfig, optional): Restart and stopping settings.

    Returns:
        FitResult: The restart with the largest final log-likelihood.

    Raises:
        InsufficientDataError: If n < K.
        DegenerateDataError: If all observations are identical.
    """
    config = config or FitConfig()
    X = _check_data(data, spec)
    results = [_em_result(_run_em(X, spec, config, r), spec) for r in range(config.n_restarts)]
    best = _best(results, lambda r: r.contrast.log_lik)
    logger.info(
        f"MLE K={spec.K}: log L = {best.contrast.log_lik:.6f} (restart {best.restart_index}, "
        f"{best.n_iters} iterations, converged={best.converged})"
    )
    return best


class Reparameterization:
    """
    Unconstrained coordinates z for the parameters of one model.

    Layout of z, in order:
      - free proportions: K-1 logits of the floored simplex,
        pi = prop_floor + (1 - K prop_floor) softmax(eta, 0);
      - means: each coordinate mapped into its mean-box interval by a sigmoid
        (one mean for the symmetric pair);
      - covariances: spherical and diagonal variances as log-variances mapped
        into [log var_floor, log var_ceil] by a sigmoid; equal-volume diagonal
        as one bounded log-volume plus centred per-component log-shapes; full
        as log-Cholesky factors (log-diagonal, raw off-diagonal).
    Bounds not enforced by the map are restored by ``project_to_bounds``.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.family: ModelFamily = spec.family
        self.K, self.d = spec.K, spec.d
        bounds = self.family.bounds
        self.prop_floor = bounds.prop_floor
        self.log_floor = float(np.log(bounds.var_floor))
        self.log_ceil = float(np.log(bounds.var_ceil))
        low, high = bounds.mean_low, bounds.mean_high
        if self.family.symmetric_pair:
            low, high = np.maximum(low, -high), np.minimum(high, -low)
        self.mean_low, self.mean_high = low, high
        self.structure = self.family.covariance_structure
        self.free_weights = self.family.proportions is Proportions.FREE and not self.family.symmetric_pair
        self.n_weight = self.K - 1 if self.free_weights else 0
        self.n_mean_components = 1 if self.family.symmetric_pair else self.K
        self.n_mean = self.n_mean_components * self.d
        self.tril = np.tril_indices(self.d, -1)
        if self.family.symmetric_pair:
            self.n_cov = 1
        elif self.structure is CovarianceStructure.SPHERICAL:
            self.n_cov = self.K
        elif self.structure is CovarianceStructure.DIAGONAL:
            self.n_cov = self.K * self.d
        elif self.structure is CovarianceStructure.DIAGONAL_EQUAL_VOLUME:
            self.n_cov = 1 + self.K * self.d
        else:
            self.n_cov = self.K * self.d * (self.d + 1) // 2

    @property
    def size(self) -> int:
        return self.n_weight + self.n_mean + self.n_cov

    def _split(self, z: np.ndarray):
        a = self.n_weight
        b = a + self.n_mean
        return z[:a], z[a:b].reshape(self.n_mean_components, self.d), z[b:]

    @staticmethod
    def _to_unit(values, low, high, strict: bool, what: str) -> np.ndarray:
        width = np.asarray(high - low, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(width > 0, (values - low) / np.where(width > 0, width, 1.0), 0.5)
        if strict and (np.any(ratio <= 0) or np.any(ratio >= 1)):
            raise BoundaryError(f"{what} lie on the bounds of the parameter space")
        return logit(np.clip(ratio, INTERIOR_MARGIN, 1 - INTERIOR_MARGIN))

    def encode(self, params: MixtureParams, strict: bool = True) -> np.ndarray:
        """
        Coordinates of ``params``.

        Raises:
            BoundaryError: If ``strict`` and a bounded coordinate sits on its bound.
        """
        if params.K != self.K or params.d != self.d:
            raise DimensionMismatchError("Parameters do not match the model")
        parts = []
        if self.free_weights:
            free_mass = 1.0 - self.K * self.prop_floor
            share = (params.weights - self.prop_floor) / free_mass if free_mass > 0 else np.full(self.K, 1.0 / self.K)
            if strict and np.any(share <= 0):
                raise BoundaryError("Mixing proportions lie on the proportion floor")
            log_share = np.log(np.maximum(share, INTERIOR_MARGIN))
            parts.append(log_share[:-1] - log_share[-1])
        means = params.means[:1] if self.family.symmetric_pair else params.means
        parts.append(self._to_unit(means, self.mean_low, self.mean_high, strict, "Means").reshape(-1))

        variances = np.diagonal(params.covariances, axis1=1, axis2=2)
        log_var = np.log(variances)
        if self.family.symmetric_pair or self.structure is CovarianceStructure.SPHERICAL:
            log_var = log_var[:1, 0] if self.family.symmetric_pair else log_var[:, 0]
            parts.append(self._to_unit(log_var, self.log_floor, self.log_ceil, strict, "Variances"))
        elif self.structure is CovarianceStructure.DIAGONAL:
            parts.append(self._to_unit(log_var, self.log_floor, self.log_ceil, strict, "Variances").reshape(-1))
        elif self.structure is CovarianceStructure.DIAGONAL_EQUAL_VOLUME:
            row_means = log_var.mean(axis=1)
            log_volume = np.array([row_means.mean()])
            parts.append(self._to_unit(log_volume, self.log_floor, self.log_ceil, strict, "Volumes"))
            parts.append((log_var - row_means[:, None]).reshape(-1))
        else:
            for covariance in params.covariances:
                try:
                    lower = scipy.linalg.cholesky(covariance, lower=True)
                except (np.linalg.LinAlgError, ValueError) as e:
                    raise FactorizationError(f"Cholesky factorization failed: {e}") from e
                parts.append(np.concatenate([np.log(np.diag(lower)), lower[self.tril]]))
        return np.concatenate(parts)

    def _bounded(self, z, low, high):
        s = expit(z)
        return low + (high - low) * s, (high - low) * s * (1 - s)

    def decode(self, z: np.ndarray) -> MixtureParams:
        """Parameters at coordinates ``z`` (not projected)."""
        return self._decode(np.asarray(z, dtype=float))[0]

    def _decode(self, z: np.ndarray):
        K, d = self.K, self.d
        eta, u, v = self._split(z)
        cache = {}
        if self.free_weights:
            logits = np.append(eta, 0.0)
            share = np.exp(logits - logsumexp(logits))
            free_mass = 1.0 - K * self.prop_floor
            weights = self.prop_floor + free_mass * share
            weights = weights / weights.sum()
            cache["share"], cache["free_mass"] = share, free_mass
        else:
            weights = np.full(K, 1.0 / K)

        mean_values, mean_slopes = self._bounded(u, self.mean_low, self.mean_high)
        cache["mean_slopes"] = mean_slopes
        means = np.array([mean_values[0], -mean_values[0]]) if self.family.symmetric_pair else mean_values

        index = np.arange(d)
        covariances = np.zeros((K, d, d))
        if self.family.symmetric_pair or self.structure in (
            CovarianceStructure.SPHERICAL,
            CovarianceStructure.DIAGONAL,
        ):
            log_var, slopes = self._bounded(v, self.log_floor, self.log_ceil)
            variances = np.exp(log_var)
            cache["var_slopes"] = variances * slopes
            if self.family.symmetric_pair:
                covariances[:, index, index] = variances[0]
            elif self.structure is CovarianceStructure.SPHERICAL:
                covariances[:, index, index] = variances[:, None]
            else:
                covariances[:, index, index] = variances.reshape(K, d)
        elif self.structure is CovarianceStructure.DIAGONAL_EQUAL_VOLUME:
            log_volume, slope = self._bounded(v[:1], self.log_floor, self.log_ceil)
            shape = v[1:].reshape(K, d)
            log_var = log_volume[0] + shape - shape.mean(axis=1, keepdims=True)
            variances = np.exp(log_var)
            covariances[:, index, index] = variances
            cache["volume_slope"], cache["variances"] = slope[0], variances
        else:
            per = d * (d + 1) // 2
            lowers = np.zeros((K, d, d))
            for k in range(K):
                block = v[k * per:(k + 1) * per]
                lowers[k, index, index] = np.exp(block[:d])
                lowers[k][self.tril] = block[d:]
                covariance = lowers[k] @ lowers[k].T
                covariances[k] = 0.5 * (covariance + covariance.T)
            cache["lowers"] = lowers
        return MixtureParams(weights, means, covariances), cache

    def value_and_gradient(self, z: np.ndarray, data, objective: str = "lcc") -> Tuple[float, np.ndarray]:
        """
        Contrast value and its gradient with respect to ``z``.

        Args:
            z (np.ndarray): Coordinates.
            data: n x d observations.
            objective (str): "lcc" for log L - Ent, "loglik" for log L.
        """
        if objective not in ("lcc", "loglik"):
            raise ConfigurationError(f"Unknown objective {objective!r}")
        X = as_data_matrix(data)
        params, cache = self._decode(np.asarray(z, dtype=float))
        K, d = self.K, self.d
        log_weighted = weighted_log_densities(params, X)
        log_norm = logsumexp(log_weighted, axis=1)
        log_tau = np.minimum(log_weighted - log_norm[:, None], 0.0)
        tau = np.exp(log_tau)
        value = float(np.sum(log_norm))
        if objective == "lcc":
            # dLcc / d(log pi_k + log phi_ik) = tau_ik (1 + log tau_ik + H_i)
            with np.errstate(invalid="ignore"):
                tau_log_tau = np.where(tau > H_ZERO_THRESHOLD, tau * log_tau, 0.0)
            row_entropy = -tau_log_tau.sum(axis=1)
            w = tau + tau_log_tau + tau * row_entropy[:, None]
            value -= float(np.sum(row_entropy))
        else:
            w = tau
        W = w.sum(axis=0)

        grad_mean = np.empty((K, d))
        grad_cov = np.empty((K, d, d))
        for k in range(K):
            factor = scipy.linalg.cho_factor(params.covariances[k], lower=True)
            precision = scipy.linalg.cho_solve(factor, np.eye(d))
            scaled = (X - params.means[k]) @ precision
            weighted = w[:, k, None] * scaled
            grad_mean[k] = weighted.sum(axis=0)
            grad = 0.5 * (weighted.T @ scaled - W[k] * precision)
            grad_cov[k] = 0.5 * (grad + grad.T)

        parts = []
        if self.free_weights:
            share = cache["share"]
            r = cache["free_mass"] * W / params.weights
            parts.append((share * (r - share @ r))[:-1])

        if self.family.symmetric_pair:
            grad_half = (grad_mean[0] - grad_mean[1])[None, :]
            parts.append((grad_half * cache["mean_slopes"]).reshape(-1))
        else:
            parts.append((grad_mean * cache["mean_slopes"]).reshape(-1))

        diagonal = np.diagonal(grad_cov, axis1=1, axis2=2)
        if self.family.symmetric_pair:
            parts.append(np.array([diagonal.sum()]) * cache["var_slopes"])
        elif self.structure is CovarianceStructure.SPHERICAL:
            parts.append(diagonal.sum(axis=1) * cache["var_slopes"])
        elif self.structure is CovarianceStructure.DIAGONAL:
            parts.append(diagonal.reshape(-1) * cache["var_slopes"])
        elif self.structure is CovarianceStructure.DIAGONAL_EQUAL_VOLUME:
            per_log_var = diagonal * cache["variances"]
            parts.append(np.array([per_log_var.sum() * cache["volume_slope"]]))
            parts.append((per_log_var - per_log_var.mean(axis=1, keepdims=True)).reshape(-1))
        else:
            index = np.arange(d)
            for k in range(K):
                lower = cache["lowers"][k]
                grad_lower = 2.0 * grad_cov[k] @ lower
                parts.append(np.concatenate([grad_lower[index, index] * lower[index, index], grad_lower[self.tril]]))
        return value, np.concatenate(parts)


def lcc_gradient(params: MixtureParams, data, family: ModelFamily, objective: str = "lcc") -> np.ndarray:
    """
    Gradient of Lcc (or of log L) in the unconstrained coordinates of ``Reparameterization``.

    Args:
        params (MixtureParams): A point strictly inside the bounds.
        data: n x d observations.
        family (ModelFamily): The model family defining the coordinates.
        objective (str): "lcc" or "loglik".

    Raises:
        BoundaryError: If a bounded coordinate of ``params`` sits on its bound.
    """
    reparam = Reparameterization(ModelSpec(family, params.K, params.d))
    return reparam.value_and_gradient(reparam.encode(params, strict=True), data, objective)[1]


def _ascend_lcc(X: np.ndarray, spec: ModelSpec, config: FitConfig, start: FitResult) -> FitResult:
    """Projected gradient ascent on Lcc / n from an EM solution."""
    n = X.shape[0]
    family = spec.family
    best_params, best_contrast = start.params, start.contrast
    if spec.K == 1:
        return FitResult(
            **{**start.__dict__, "estimator": Estimator.MLCCE, "n_iters": 0, "converged": start.converged}
        )
    reparam = Reparameterization(spec)
    z = reparam.encode(start.params, strict=False)
    value, grad = reparam.value_and_gradient(z, X)
    value, grad = value / n, grad / n
    converged = False
    n_iters = 0
    for iteration in range(1, config.max_grad_iters + 1):
        if np.max(np.abs(grad)) < config.grad_tol:
            converged = True
            break
        step = config.initial_step
        squared = float(grad @ grad)
        accepted = None
        for _ in range(config.max_backtracks):
            try:
                candidate = project_to_bounds(reparam.decode(z + step * grad), family)
                contrast = conditional_classification_loglik(candidate, X)
            except (InvalidParametersError, FactorizationError, FloatingPointError):
                contrast = None
            if contrast is not None and np.isfinite(contrast.lcc) and (
                contrast.lcc / n >= value + config.armijo * step * squared
            ):
                accepted = (candidate, contrast)
                break
            step *= 0.5
        if accepted is None:
            logger.log(
                NUMERIC_ISSUES_LVL_NUM,
                f"MLccE K={spec.K} restart {start.restart_index}: line search failed at iteration {iteration}",
            )
            break
        candidate, contrast = accepted
        n_iters = iteration
        gained = contrast.lcc / n - value
        if contrast.lcc > best_contrast.lcc:
            best_params, best_contrast = candidate, contrast
        z = reparam.encode(candidate, strict=False)
        value, grad = reparam.value_and_gradient(z, X)
        value, grad = value / n, grad / n
        if gained <= config.ascent_ftol * max(1.0, abs(value)):
            converged = True
            break
    resp = responsibilities(best_params, X)
    logger.debug(
        f"MLccE K={spec.K} restart {start.restart_index}: Lcc {start.contrast.lcc:.6f} -> "
        f"{best_contrast.lcc:.6f} in {n_iters} iterations (converged={converged})"
    )
    return FitResult(
        params=best_params,
        contrast=best_contrast,
        converged=converged,
        n_iters=n_iters,
        restart_index=start.restart_index,
        estimator=Estimator.MLCCE,
        spec=spec,
        map_log_tau=_map_log_tau(resp),
        loglik_trace=start.loglik_trace,
        clamped_trace=start.clamped_trace,
        rescues=start.rescues,
    )


def fit_estimators(data, spec: ModelSpec, config: Optional[FitConfig] = None) -> Tuple[FitResult, FitResult]:
    """
    Run the EM restarts once and return both the MLE and the MLccE fit.

    Returns:
        (mle, mlcce): Best restart by log L, and best ascended restart by Lcc.
    """
    config = config or FitConfig()
    X = _check_data(data, spec)
    em_results = [_em_result(_run_em(X, spec, config, r), spec) for r in range(config.n_restarts)]
    mle = _best(em_results, lambda r: r.contrast.log_lik)
    mlcce = _best([_ascend_lcc(X, spec, config, r) for r in em_results], lambda r: r.contrast.lcc)
    logger.info(
        f"K={spec.K}: MLE log L = {mle.contrast.log_lik:.6f} (restart {mle.restart_index}); "
        f"MLccE Lcc = {mlcce.contrast.lcc:.6f} (restart {mlcce.restart_index})"
    )
    return mle, mlcce


def fit_mlcce(data, spec: ModelSpec, config: Optional[FitConfig] = None) -> FitResult:
    """
    Maximum conditional classification likelihood fit.

    Every restart runs EM to a local MLE, then ascends Lcc by projected
    gradient with backtracking; the restart with the largest final Lcc wins.
    The final Lcc of a restart is never below the Lcc of its EM start.

    Args:
        data: n x d observations.
        spec (ModelSpec): Family, K and d.
        config (FitConfig, optional): Restart and stopping settings.

    Returns:
        FitResult: Tagged ``Estimator.MLCCE``.
    """
    return fit_estimators(data, spec, config)[1]
