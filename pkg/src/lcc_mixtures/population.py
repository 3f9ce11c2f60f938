"""
Population (expected) contrast of one-dimensional Gaussian mixture models.

The expected contrast of parameters theta under a true density f0 is

    E_f0[-Lcc(theta)] = integral f0(x) (-log f(x; theta) + h_K(tau(x; theta))) dx

per observation. It is computed by quadrature and minimized over the
single-Gaussian model and the symmetric two-component model by a grid scan
followed by a Nelder-Mead polish. The symmetric pair sits at the mean of f0:
its components are (c - mu, c + mu) with c = E_f0[X].
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from lcc_mixtures.contrast import H_ZERO_THRESHOLD, responsibilities
from lcc_mixtures.custom_exceptions import (
    ConfigurationError,
    QuadratureResolutionError,
    UnsupportedModelError,
)
from lcc_mixtures.gaussian import LOG_2PI
from lcc_mixtures.models import (
    Bounds,
    MixtureParams,
    ModelFamily,
    ModelSpec,
    project_to_bounds,
)

logger = logging.getLogger(__name__)

TRAPEZOID_NODES = 2001
TRAPEZOID_HALF_WIDTH = 10.0
HERMITE_NODES = 200
REFINEMENT_TOL = 1e-6
# K values whose minimized contrast is within this of the best count as tied
K0_TIE_TOL = 1e-10


class DensityVariant(Enum):
    GAUSSIAN = "gaussian"
    GAUSSIAN_MIXTURE = "gaussian_mixture"


class QuadratureKind(Enum):
    GAUSS_HERMITE = "gauss_hermite_transformed"
    TRAPEZOID = "trapezoid_truncated"


@dataclass(frozen=True, eq=False)
class DensitySpec:
    """A true density f0 on the real line: one Gaussian or a Gaussian mixture."""

    variant: DensityVariant
    params: MixtureParams
    support = "real line"

    def __post_init__(self):
        object.__setattr__(self, "variant", DensityVariant(self.variant))
        if self.variant is DensityVariant.GAUSSIAN and self.params.K != 1:
            raise ConfigurationError("A Gaussian density has exactly one component")

    @classmethod
    def gaussian(cls, mean: float = 0.0, variance: float = 1.0) -> "DensitySpec":
        return cls(DensityVariant.GAUSSIAN, MixtureParams.univariate([1.0], [mean], [variance]))

    @classmethod
    def mixture(cls, weights: Sequence[float], means: Sequence[float], variances: Sequence[float]) -> "DensitySpec":
        return cls(DensityVariant.GAUSSIAN_MIXTURE, MixtureParams.univariate(weights, means, variances))

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def mean(self) -> float:
        self._require_univariate()
        return float(self.params.weights @ self.params.means[:, 0])

    @property
    def variance(self) -> float:
        self._require_univariate()
        means = self.params.means[:, 0]
        second = self.params.weights @ (self.params.covariances[:, 0, 0] + means**2)
        return float(second - self.mean**2)

    def log_pdf(self, x) -> np.ndarray:
        return responsibilities(self.params, np.asarray(x, dtype=float).reshape(-1, 1)).log_norm

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def _require_univariate(self):
        if self.d != 1:
            raise UnsupportedModelError(f"Population losses are one-dimensional; the density has d={self.d}")


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Nodes and weights of an expectation rule under a fixed density f0:
    E_f0[g] is approximated by sum_j weights_j g(nodes_j).

    Attributes:
        nodes: Evaluation points.
        weights: Positive weights, f0 already folded in.
        kind: Truncated trapezoid or per-component transformed Gauss-Hermite.
        resolution: Total trapezoid nodes, or Hermite nodes per component.
    """

    nodes: np.ndarray
    weights: np.ndarray
    kind: QuadratureKind
    resolution: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", QuadratureKind(self.kind))
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.size == 0 or nodes.shape != weights.shape:
            raise ConfigurationError("A quadrature rule needs matching, nonempty nodes and weights")
        if np.any(weights <= 0):
            raise ConfigurationError("Quadrature weights must be positive")
        if self.kind is QuadratureKind.TRAPEZOID and np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("Trapezoid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def trapezoid(
        cls, f0: DensitySpec, n_nodes: int = TRAPEZOID_NODES, half_width: float = TRAPEZOID_HALF_WIDTH
    ) -> "QuadratureRule":
        """
        Trapezoid rule over the union of mean +/- half_width standard deviations
        of the components of f0.
        """
        f0._require_univariate()
        if n_nodes < 3:
            raise ConfigurationError("A trapezoid rule needs at least three nodes")
        sd = np.sqrt(f0.params.covariances[:, 0, 0])
        means = f0.params.means[:, 0]
        x = np.linspace(np.min(means - half_width * sd), np.max(means + half_width * sd), n_nodes)
        step = np.full(n_nodes, x[1] - x[0])
        step[[0, -1]] *= 0.5
        weights = step * f0.pdf(x)
        keep = weights > 0
        return cls(x[keep], weights[keep], QuadratureKind.TRAPEZOID, n_nodes)

    @classmethod
    def gauss_hermite(cls, f0: DensitySpec, n_nodes: int = HERMITE_NODES) -> "QuadratureRule":
        """Gauss-Hermite nodes mapped onto every component of f0, weighted by its proportion."""
        f0._require_univariate()
        t, w = hermgauss(n_nodes)
        nodes, weights = [], []
        for weight, (mean, covariance) in zip(f0.params.weights, f0.params.components):
            nodes.append(mean[0] + np.sqrt(2.0 * covariance[0, 0]) * t)
            weights.append(weight * w / np.sqrt(np.pi))
        nodes, weights = np.concatenate(nodes), np.concatenate(weights)
        keep = weights > 0
        return cls(nodes[keep], weights[keep], QuadratureKind.GAUSS_HERMITE, n_nodes)

    @classmethod
    def for_density(cls, f0: DensitySpec, kind=QuadratureKind.TRAPEZOID, resolution: Optional[int] = None):
        kind = QuadratureKind(kind)
        if kind is QuadratureKind.TRAPEZOID:
            return cls.trapezoid(f0, resolution or TRAPEZOID_NODES)
        return cls.gauss_hermite(f0, resolution or HERMITE_NODES)

    def refined(self, f0: DensitySpec) -> "QuadratureRule":
        """The same kind of rule with the node spacing halved."""
        return QuadratureRule.for_density(f0, self.kind, 2 * self.resolution - 1)

    def expectation(self, values) -> float:
        return float(np.sum(self.weights * np.asarray(values, dtype=float)))


def _pointwise_contrast(params: MixtureParams, x: np.ndarray, include_entropy: bool) -> np.ndarray:
    resp = responsibilities(params, x.reshape(-1, 1))
    values = -resp.log_norm
    if include_entropy:
        values = values + resp.entropy_rows()
    return values


def expected_contrast(
    f0: DensitySpec,
    params: MixtureParams,
    rule: Optional[QuadratureRule] = None,
    include_entropy: bool = True,
    verify: bool = False,
) -> float:
    """
    Per-observation expected contrast E_f0[-log f(X; theta) + h_K(tau(X; theta))].

    Args:
        f0 (DensitySpec): The true density.
        params (MixtureParams): The mixture theta.
        rule (QuadratureRule, optional): Defaults to the trapezoid rule for f0.
        include_entropy (bool): Drop the entropy term to get the expected
            negative log-likelihood instead.
        verify (bool): Also evaluate on the refined rule and fail if the two
            disagree by more than 1e-6.

    Raises:
        UnsupportedModelError: If f0 or theta is not one-dimensional.
        QuadratureResolutionError: If ``verify`` and the rule is too coarse.
    """
    f0._require_univariate()
    if params.d != 1:
        raise UnsupportedModelError(f"Population losses are one-dimensional; the mixture has d={params.d}")
    rule = rule or QuadratureRule.trapezoid(f0)
    value = rule.expectation(_pointwise_contrast(params, rule.nodes, include_entropy))
    if verify:
        fine_rule = rule.refined(f0)
        fine = fine_rule.expectation(_pointwise_contrast(params, fine_rule.nodes, include_entropy))
        if abs(fine - value) > REFINEMENT_TOL:
            raise QuadratureResolutionError(value, fine, REFINEMENT_TOL)
    return value


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Candidate (mean, variance) values for the scan; the mean is the half-distance for the symmetric pair."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).reshape(-1)
        variances = np.asarray(self.variances, dtype=float).reshape(-1)
        if means.size == 0 or variances.size == 0:
            raise ConfigurationError("The parameter grid is empty")
        if np.any(variances <= 0):
            raise ConfigurationError("Grid variances must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def size(self) -> int:
        return self.means.size * self.variances.size

    @classmethod
    def default(cls, f0: DensitySpec, K: int) -> "ParameterGrid":
        """
        For N(0, 1) and the symmetric pair this is mu in [0, 2] and
        sigma^2 in [0.05, 2], both with step 0.01; other targets are scaled by
        their standard deviation and variance. Pair half-distances are
        measured from the mean of f0.
        """
        smallest = float(f0.params.covariances[:, 0, 0].min())
        variances = np.linspace(0.05 * smallest, 2.0 * f0.variance, 196)
        sd = np.sqrt(f0.variance)
        if K == 1:
            means = np.linspace(f0.mean - 2.0 * sd, f0.mean + 2.0 * sd, 201)
        else:
            means = np.linspace(0.0, 2.0 * sd, 201)
        return cls(means, variances)


class PopulationMinimum(NamedTuple):
    params: MixtureParams
    value: float


def population_spec(f0: DensitySpec, K: int) -> ModelSpec:
    """
    The single-Gaussian model (K = 1) or the symmetric pair model (K = 2)
    with bounds wide enough for any minimizer under f0.

    The pair's mean box bounds its offsets from the mean of f0; the single
    Gaussian's box is centred on that mean.
    """
    f0._require_univariate()
    if K not in (1, 2):
        raise UnsupportedModelError(f"Population minimization supports K = 1 or the symmetric pair, got K={K}")
    smallest = float(f0.params.covariances[:, 0, 0].min())
    center = f0.mean
    reach = float(np.max(np.abs(f0.params.means[:, 0] - center))) + 10.0 * np.sqrt(f0.variance)
    shift = center if K == 1 else 0.0
    bounds = Bounds(
        prop_floor=1e-3,
        var_floor=1e-4 * smallest,
        var_ceil=1e4 * f0.variance,
        mean_box=((shift - reach, shift + reach),),
    )
    return ModelSpec(ModelFamily("spherical", "equal", bounds, symmetric_pair=K == 2), K, 1)


def pair_center(f0: DensitySpec, model: ModelSpec) -> float:
    """Location of the symmetric pair under f0; 0 for the single Gaussian."""
    return f0.mean if model.K == 2 else 0.0


def _candidate(model: ModelSpec, mean: float, variance: float, center: float = 0.0) -> MixtureParams:
    if model.K == 1:
        return project_to_bounds(MixtureParams.univariate([1.0], [mean], [variance]), model.family)
    offsets = project_to_bounds(
        MixtureParams.univariate([0.5, 0.5], [-mean, mean], [variance, variance]), model.family
    )
    return MixtureParams(offsets.weights, offsets.means + center, offsets.covariances)


def _grid_losses(f0: DensitySpec, model: ModelSpec, grid: ParameterGrid, rule: QuadratureRule, include_entropy: bool):
    """Expected contrast at every grid cell, shape (len(means), len(variances))."""
    x = rule.nodes[None, :] - pair_center(f0, model)
    variances = grid.variances[:, None]
    out = np.empty((grid.means.size, grid.variances.size))
    for i, mean in enumerate(grid.means):
        if model.K == 1:
            log_f = -0.5 * (LOG_2PI + np.log(variances) + (x - mean) ** 2 / variances)
            values = -log_f
        else:
            # components at -mean and +mean, equal weights
            log_left = -0.5 * (LOG_2PI + np.log(variances) + (x + mean) ** 2 / variances)
            log_right = -0.5 * (LOG_2PI + np.log(variances) + (x - mean) ** 2 / variances)
            log_f = np.log(0.5) + logsumexp(np.stack([log_left, log_right]), axis=0)
            values = -log_f
            if include_entropy:
                tau = expit(log_right - log_left)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ent = np.where(tau > H_ZERO_THRESHOLD, -tau * np.log(tau), 0.0)
                    ent = ent + np.where(1 - tau > H_ZERO_THRESHOLD, -(1 - tau) * np.log1p(-tau), 0.0)
                values = values + ent
        out[i] = values @ rule.weights
    return out


def minimize_expected_contrast(
    f0: DensitySpec,
    model: ModelSpec,
    grid: Optional[ParameterGrid] = None,
    refine: bool = True,
    include_entropy: bool = True,
    rule: Optional[QuadratureRule] = None,
) -> PopulationMinimum:
    """
    Minimize the expected contrast over a one-dimensional model.

    A scan of ``grid`` picks the best cell (ties go to the smallest mean, then
    the smallest variance), which Nelder-Mead then polishes in
    (mean, log variance). The symmetric pair is returned as its canonical
    representative with means (c - mu, c + mu), mu >= 0, where c is the mean
    of f0.

    Args:
        f0 (DensitySpec): The true density.
        model (ModelSpec): K = 1, or the symmetric pair family.
        grid (ParameterGrid, optional): Defaults to ``ParameterGrid.default``.
        refine (bool): Run the local polish after the scan.
        include_entropy (bool): False minimizes the expected negative
            log-likelihood (the Kullback-Leibler projection) instead.
        rule (QuadratureRule, optional): Defaults to the trapezoid rule for f0.

    Raises:
        UnsupportedModelError: For multivariate models or K >= 2 without the symmetric pair.
        ConfigurationError: For an empty grid.
    """
    f0._require_univariate()
    if model.d != 1:
        raise UnsupportedModelError(f"Population losses are one-dimensional; the model has d={model.d}")
    if model.K != 1 and not model.family.symmetric_pair:
        raise UnsupportedModelError("Population minimization supports K = 1 or the symmetric pair family")
    grid = grid or ParameterGrid.default(f0, model.K)
    rule = rule or QuadratureRule.trapezoid(f0)

    center = pair_center(f0, model)
    losses = _grid_losses(f0, model, grid, rule, include_entropy)
    i, j = np.unravel_index(np.argmin(losses), losses.shape)
    mean, variance = float(grid.means[i]), float(grid.variances[j])
    logger.debug(f"Grid scan over {grid.size} cells: best (mean, variance) = ({mean}, {variance})")
    best = _candidate(model, mean, variance, center)
    best_value = expected_contrast(f0, best, rule, include_entropy)

    if refine:
        def objective(z):
            return expected_contrast(f0, _candidate(model, z[0], np.exp(z[1]), center), rule, include_entropy)

        result = minimize(
            objective,
            np.array([mean, np.log(variance)]),
            method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 2000},
        )
        polished = _candidate(model, result.x[0], np.exp(result.x[1]), center)
        polished_value = expected_contrast(f0, polished, rule, include_entropy)
        if polished_value <= best_value:
            best, best_value = polished, polished_value
        else:
            logger.debug("Local polish did not improve on the grid scan")

    if model.K == 2:
        mu = abs(float(best.means[1, 0]) - center)
        best = _candidate(model, mu, float(best.covariances[0, 0, 0]), center)
    return PopulationMinimum(best, best_value)


def population_minima(
    f0: DensitySpec,
    specs: Sequence[ModelSpec],
    grid: Optional[ParameterGrid] = None,
    rule: Optional[QuadratureRule] = None,
    include_entropy: bool = True,
) -> Dict[int, PopulationMinimum]:
    """Minimized expected contrast for every model, keyed by K."""
    if not specs:
        raise ConfigurationError("No models to compare")
    return {
        spec.K: minimize_expected_contrast(f0, spec, grid, include_entropy=include_entropy, rule=rule)
        for spec in specs
    }


def population_k0(
    f0: DensitySpec,
    specs: Sequence[ModelSpec],
    grid: Optional[ParameterGrid] = None,
    rule: Optional[QuadratureRule] = None,
) -> int:
    """
    Smallest K minimizing the expected contrast over the given models.

    Raises:
        UnsupportedModelError: If any model is multivariate.
    """
    return smallest_minimizing_k(population_minima(f0, specs, grid, rule))


def smallest_minimizing_k(minima: Dict[int, PopulationMinimum]) -> int:
    best = min(m.value for m in minima.values())
    return min(K for K, m in minima.items() if m.value <= best + K0_TIE_TOL)
