"""
Mixture parameters, model families and free-parameter counting.

A model family fixes the covariance structure, the proportion constraint and
the bounds of the compact parameter space. ``project_to_bounds`` maps any
dimensionally consistent parameter set onto that space.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from lcc_mixtures.custom_exceptions import (
    ConfigurationError,
    DegenerateDataError,
    DimensionMismatchError,
    InvalidParametersError,
    LabelMismatchError,
    NonFiniteValueError,
)

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
SYMMETRY_TOL = 1e-12
DEFAULT_PROP_FLOOR = 1e-3
VAR_FLOOR_FACTOR = 1e-4
VAR_CEIL_FACTOR = 1e4
MEAN_BOX_INFLATION = 3.0


class CovarianceStructure(Enum):
    SPHERICAL = "spherical"
    DIAGONAL = "diag"
    DIAGONAL_EQUAL_VOLUME = "diag-eqvol"
    FULL = "full"


class Proportions(Enum):
    FREE = "free"
    EQUAL = "equal"


class Component(NamedTuple):
    mean: np.ndarray
    covariance: np.ndarray


def _readonly(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def as_data_matrix(data) -> np.ndarray:
    """
    Coerce observations to an n x d float matrix and reject non-finite values.

    Args:
        data: A sequence of observations, a 1-d array (read as d=1) or an n x d array.

    Returns:
        np.ndarray: The data as a 2-d float array.

    Raises:
        NonFiniteValueError: If any value is NaN or infinite.
    """
    matrix = np.asarray(data, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2:
        raise DimensionMismatchError(f"Data must be 1-d or 2-d, got shape {matrix.shape}")
    bad = ~np.isfinite(matrix)
    if bad.any():
        row, column = np.argwhere(bad)[0]
        raise NonFiniteValueError(int(row) + 1, int(column) + 1)
    return matrix


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """
    Parameters of a K-component Gaussian mixture.

    Attributes:
        weights: Mixing proportions, shape (K,).
        means: Component means, shape (K, d).
        covariances: Component covariance matrices, shape (K, d, d).
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        weights = _readonly(self.weights).reshape(-1)
        means = _readonly(self.means)
        covariances = _readonly(self.covariances)
        if means.ndim != 2 or covariances.ndim != 3:
            raise InvalidParametersError(
                f"Means must be K x d and covariances K x d x d, got {means.shape} and {covariances.shape}"
            )
        K, d = means.shape
        if weights.shape != (K,) or covariances.shape != (K, d, d):
            raise InvalidParametersError(
                f"Inconsistent shapes: weights {weights.shape}, means {means.shape}, "
                f"covariances {covariances.shape}"
            )
        if K < 1 or d < 1:
            raise InvalidParametersError("A mixture needs at least one component and one dimension")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means)) and np.all(np.isfinite(covariances))):
            raise InvalidParametersError("Mixture parameters must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidParametersError(f"Weights must be nonnegative and sum to 1, got {weights}")
        scale = max(1.0, float(np.abs(covariances).max()))
        if np.abs(covariances - np.swapaxes(covariances, 1, 2)).max() > SYMMETRY_TOL * scale:
            raise InvalidParametersError("Covariance matrices must be symmetric")
        if np.linalg.eigvalsh(covariances).min() <= 0:
            raise InvalidParametersError("Covariance matrices must be positive definite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)

    @classmethod
    def from_components(cls, weights: Sequence[float], components: Sequence[Component]) -> "MixtureParams":
        return cls(
            weights,
            np.array([np.atleast_1d(c.mean) for c in components], dtype=float),
            np.array([np.atleast_2d(c.covariance) for c in components], dtype=float),
        )

    @classmethod
    def univariate(cls, weights: Sequence[float], means: Sequence[float], variances: Sequence[float]) -> "MixtureParams":
        """Build a 1-d mixture from scalar means and variances."""
        return cls(
            np.asarray(weights, dtype=float),
            np.asarray(means, dtype=float).reshape(-1, 1),
            np.asarray(variances, dtype=float).reshape(-1, 1, 1),
        )

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> Tuple[Component, ...]:
        return tuple(Component(m, c) for m, c in zip(self.means, self.covariances))

    def permuted(self, order: Sequence[int]) -> "MixtureParams":
        """Return the same mixture with components reordered (label switching)."""
        order = np.asarray(order)
        return MixtureParams(self.weights[order], self.means[order], self.covariances[order])

    def allclose(self, other: "MixtureParams", atol: float = 1e-10) -> bool:
        return (
            self.weights.shape == other.weights.shape
            and self.means.shape == other.means.shape
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
            and np.allclose(self.means, other.means, rtol=0, atol=atol)
            and np.allclose(self.covariances, other.covariances, rtol=0, atol=atol)
        )


@dataclass(frozen=True)
class Bounds:
    """
    Bounds of the compact parameter space.

    Attributes:
        prop_floor: Lower bound on every mixing proportion.
        var_floor: Lower bound on every covariance eigenvalue.
        var_ceil: Upper bound on every covariance eigenvalue.
        mean_box: One (low, high) interval per coordinate for component means.
    """

    prop_floor: float
    var_floor: float
    var_ceil: float
    mean_box: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "mean_box", tuple((float(lo), float(hi)) for lo, hi in self.mean_box)
        )
        if not 0 < self.prop_floor <= 1:
            raise ConfigurationError(f"prop_floor must be in (0, 1], got {self.prop_floor}")
        if not 0 < self.var_floor <= self.var_ceil or not np.isfinite(self.var_ceil):
            raise ConfigurationError(
                f"Need 0 < var_floor <= var_ceil < inf, got {self.var_floor}, {self.var_ceil}"
            )
        for lo, hi in self.mean_box:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ConfigurationError(f"Mean box interval ({lo}, {hi}) must be bounded and nonempty")

    @property
    def mean_low(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.mean_box])

    @property
    def mean_high(self) -> np.ndarray:
        return np.array([hi for _, hi in self.mean_box])


@dataclass(frozen=True)
class ModelFamily:
    """
    Structural constraints plus bounds defining the parameter space of a model.

    ``symmetric_pair`` restricts the model to two equally weighted components
    with means (m, -m) and one shared spherical variance.
    """

    covariance_structure: CovarianceStructure
    proportions: Proportions
    bounds: Bounds
    symmetric_pair: bool = False

    def __post_init__(self):
        object.__setattr__(self, "covariance_structure", CovarianceStructure(self.covariance_structure))
        object.__setattr__(self, "proportions", Proportions(self.proportions))
        if self.symmetric_pair and (
            self.covariance_structure is not CovarianceStructure.SPHERICAL
            or self.proportions is not Proportions.EQUAL
        ):
            raise ConfigurationError("The symmetric pair family is spherical with equal proportions")

    def check(self, K: int, d: int) -> None:
        """Raise if this family cannot host a K-component mixture in dimension d."""
        if K < 1 or d < 1:
            raise ConfigurationError(f"K and d must be positive, got K={K}, d={d}")
        if self.bounds.prop_floor * K > 1 + WEIGHT_SUM_TOL:
            raise ConfigurationError(
                f"prop_floor {self.bounds.prop_floor} is infeasible for K={K}"
            )
        if len(self.bounds.mean_box) != d:
            raise DimensionMismatchError(
                f"Mean box has {len(self.bounds.mean_box)} intervals but d={d}"
            )
        if self.symmetric_pair and K != 2:
            raise ConfigurationError("The symmetric pair family has exactly two components")

    @classmethod
    def for_data(
        cls,
        data,
        covariance_structure="full",
        proportions="free",
        prop_floor: float = DEFAULT_PROP_FLOOR,
        var_floor: float = None,
        var_ceil: float = None,
        symmetric_pair: bool = False,
    ) -> "ModelFamily":
        """
        Build a family whose bounds are scaled to the data.

        The variance bounds default to 1e-4 and 1e4 times the per-coordinate
        data variance; the mean box is the data range widened by three
        standard deviations on each side.

        Raises:
            DegenerateDataError: If every observation is identical.
        """
        data = as_data_matrix(data)
        variances = data.var(axis=0)
        if np.all(variances == 0):
            raise DegenerateDataError("All observations are identical; no scatter to scale bounds on")
        variances = np.where(variances > 0, variances, variances[variances > 0].min())
        spread = MEAN_BOX_INFLATION * np.sqrt(variances)
        low = data.min(axis=0) - spread
        high = data.max(axis=0) + spread
        if symmetric_pair:
            reach = np.maximum(np.abs(low), np.abs(high))
            low, high = -reach, reach
        bounds = Bounds(
            prop_floor=prop_floor,
            var_floor=var_floor if var_floor is not None else VAR_FLOOR_FACTOR * float(variances.min()),
            var_ceil=var_ceil if var_ceil is not None else VAR_CEIL_FACTOR * float(variances.max()),
            mean_box=tuple(zip(low, high)),
        )
        return cls(covariance_structure, proportions, bounds, symmetric_pair)


@dataclass(frozen=True)
class ModelSpec:
    family: ModelFamily
    K: int
    d: int

    def __post_init__(self):
        self.family.check(self.K, self.d)

    @property
    def dimension(self) -> int:
        return count_free_parameters(self.family, self.K, self.d)


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """A hard assignment of n observations to K components (one-hot rows)."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise LabelMismatchError(f"Label matrix must be n x K, got shape {entries.shape}")
        if not np.all((entries == 0) | (entries == 1)) or not np.all(entries.sum(axis=1) == 1):
            raise LabelMismatchError("Every label row must contain exactly one 1")
        entries = entries.astype(float)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_labels(cls, labels: Sequence[int], K: int) -> "LabelMatrix":
        labels = np.asarray(labels, dtype=int)
        if labels.size and (labels.min() < 0 or labels.max() >= K):
            raise LabelMismatchError(f"Labels must lie in [0, {K})")
        entries = np.zeros((labels.size, K))
        entries[np.arange(labels.size), labels] = 1.0
        return cls(entries)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.entries, axis=1)


def count_free_parameters(family: ModelFamily, K: int, d: int) -> int:
    """
    Number of free parameters D_K of the K-component model in dimension d.

    Args:
        family (ModelFamily): The model family.
        K (int): Number of components.
        d (int): Data dimension.

    Returns:
        int: Proportions (K-1 if free) + means (K*d) + covariance parameters.
    """
    if family.symmetric_pair:
        return d + 1
    proportions = K - 1 if family.proportions is Proportions.FREE else 0
    structure = family.covariance_structure
    if structure is CovarianceStructure.SPHERICAL:
        covariance = K
    elif structure is CovarianceStructure.DIAGONAL:
        covariance = K * d
    elif structure is CovarianceStructure.DIAGONAL_EQUAL_VOLUME:
        covariance = K * (d - 1) + 1
    else:
        covariance = K * d * (d + 1) // 2
    return proportions + K * d + covariance


def _project_weights(weights: np.ndarray, floor: float) -> np.ndarray:
    # Projection onto {w >= floor, sum(w) = 1}: clamped entries sit at the
    # floor, the others share the remaining mass in proportion.
    if np.all(weights >= floor) and abs(weights.sum() - 1.0) <= WEIGHT_SUM_TOL:
        return weights
    K = weights.size
    weights = np.maximum(weights, 0.0)
    clamped = np.zeros(K, dtype=bool)
    while True:
        if clamped.all():
            return np.full(K, 1.0 / K)
        free_mass = 1.0 - floor * clamped.sum()
        out = np.where(clamped, floor, weights * free_mass / weights[~clamped].sum())
        newly = ~clamped & (out < floor)
        if not newly.any():
            return out
        clamped |= newly


def _clip_eigenvalues(covariance: np.ndarray, floor: float, ceil: float) -> np.ndarray:
    covariance = 0.5 * (covariance + covariance.T)
    values, vectors = np.linalg.eigh(covariance)
    slack = 1e-12
    if values.min() >= floor * (1 - slack) and values.max() <= ceil * (1 + slack):
        return covariance
    rebuilt = (vectors * np.clip(values, floor, ceil)) @ vectors.T
    return 0.5 * (rebuilt + rebuilt.T)


def _equal_volume_log_variances(log_var: np.ndarray, log_floor: float, log_ceil: float) -> np.ndarray:
    # Equal volume means equal row sums of log-variances; each row is shifted
    # and clipped to the box so that its sum hits the shared (clamped) target.
    K, d = log_var.shape
    target = float(np.clip(log_var.sum(axis=1).mean(), d * log_floor, d * log_ceil))
    tolerance = 1e-10 * max(1.0, abs(target))
    out = log_var.copy()
    for k in range(K):
        row = log_var[k]
        inside = row.min() >= log_floor and row.max() <= log_ceil
        if inside and abs(row.sum() - target) <= tolerance:
            continue

        def excess(shift, row=row):
            return np.clip(row + shift, log_floor, log_ceil).sum() - target

        low = log_floor - row.max()
        high = log_ceil - row.min()
        shift = brentq(excess, low, high, xtol=1e-14)
        out[k] = np.clip(row + shift, log_floor, log_ceil)
    return out


def _project_covariances(covariances: np.ndarray, family: ModelFamily) -> np.ndarray:
    floor, ceil = family.bounds.var_floor, family.bounds.var_ceil
    K, d, _ = covariances.shape
    structure = family.covariance_structure
    if structure is CovarianceStructure.FULL:
        return np.array([_clip_eigenvalues(c, floor, ceil) for c in covariances])
    diagonals = np.diagonal(covariances, axis1=1, axis2=2)
    if structure is CovarianceStructure.SPHERICAL:
        variances = diagonals.mean(axis=1)
        if family.symmetric_pair:
            variances = np.full(K, variances.mean())
        diagonals = np.repeat(np.clip(variances, floor, ceil)[:, None], d, axis=1)
    elif structure is CovarianceStructure.DIAGONAL:
        diagonals = np.clip(diagonals, floor, ceil)
    else:
        log_var = np.log(np.maximum(diagonals, np.finfo(float).tiny))
        diagonals = np.exp(_equal_volume_log_variances(log_var, np.log(floor), np.log(ceil)))
        # exp(log(v)) may round just outside the box
        diagonals = np.clip(diagonals, floor, ceil)
    projected = np.zeros_like(covariances)
    index = np.arange(d)
    projected[:, index, index] = diagonals
    return projected


def project_components(
    weights: np.ndarray, means: np.ndarray, covariances: np.ndarray, family: ModelFamily
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Array-level projection behind ``project_to_bounds``.

    Accepts raw estimates (for example a singular scatter matrix) that are
    not yet valid ``MixtureParams``.

    Raises:
        DimensionMismatchError: If the arrays do not match the family's dimension.
    """
    K, d = means.shape
    if len(family.bounds.mean_box) != d:
        raise DimensionMismatchError(
            f"Parameters have d={d} but the family mean box has {len(family.bounds.mean_box)} intervals"
        )
    if family.symmetric_pair and K != 2:
        raise DimensionMismatchError("The symmetric pair family has exactly two components")

    if family.proportions is Proportions.EQUAL:
        weights = np.full(K, 1.0 / K)
    else:
        weights = _project_weights(np.asarray(weights, dtype=float), family.bounds.prop_floor)

    low, high = family.bounds.mean_low, family.bounds.mean_high
    if family.symmetric_pair:
        half = 0.5 * (means[0] - means[1])
        half = np.clip(half, np.maximum(low, -high), np.minimum(high, -low))
        means = np.array([half, -half])
    else:
        means = np.clip(means, low, high)

    return weights, means, _project_covariances(np.asarray(covariances, dtype=float), family)


def project_to_bounds(params: MixtureParams, family: ModelFamily) -> MixtureParams:
    """
    Project mixture parameters onto the compact parameter space of a family.

    Weights are floored and renormalized, means clipped to the mean box,
    covariances reduced to the family structure with eigenvalues clamped to
    [var_floor, var_ceil]. Parameters already inside the space come back
    unchanged, so the projection is idempotent.

    Args:
        params (MixtureParams): Parameters to project.
        family (ModelFamily): The target family.

    Returns:
        MixtureParams: The projected parameters.

    Raises:
        DimensionMismatchError: If the parameters do not match the family's dimension.
    """
    projected = MixtureParams(
        *project_components(params.weights, params.means, params.covariances, family)
    )
    if not projected.allclose(params, atol=0):
        logger.debug("Projection moved parameters onto the bounds of the parameter space")
    return projected
