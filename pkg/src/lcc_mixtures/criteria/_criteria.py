import importlib
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Sequence, Tuple, Union

from lcc_mixtures.custom_exceptions import (
    ConfigurationError,
    CriterionInputError,
    UnknownCriterionError,
)
from lcc_mixtures.estimation import Estimator, FitResult

logger = logging.getLogger(__name__)

BUILTIN_CRITERIA = ("aic", "bic", "icl_map", "icl_tau", "lcc_icl")


@dataclass(frozen=True)
class CriterionInputs:
    """
    Everything a criterion may use for one K.

    Attributes:
        K: Number of components.
        dimension: D_K, the number of free parameters.
        log_lik_mle: log L at the MLE.
        entropy_mle: Ent at the MLE.
        map_log_tau_mle: sum_i log tau_{i, zhat_i} at the MLE with MAP labels.
        lcc_mlcce: Lcc at the MLccE.
    """

    K: int
    dimension: int
    log_lik_mle: float
    entropy_mle: float
    map_log_tau_mle: float
    lcc_mlcce: float


def bic_penalty(n: int, dimension: int) -> float:
    return 0.5 * math.log(n) * dimension


def aic(row: CriterionInputs, n: int) -> float:
    return row.log_lik_mle - row.dimension


def bic(row: CriterionInputs, n: int) -> float:
    return row.log_lik_mle - bic_penalty(n, row.dimension)


def icl_map(row: CriterionInputs, n: int) -> float:
    """ICL with the labels replaced by the MAP labels at the MLE."""
    return row.log_lik_mle + row.map_log_tau_mle - bic_penalty(n, row.dimension)


def icl_tau(row: CriterionInputs, n: int) -> float:
    """ICL with the labels replaced by their conditional expectations: BIC minus the entropy."""
    return row.log_lik_mle - row.entropy_mle - bic_penalty(n, row.dimension)


def lcc_icl(row: CriterionInputs, n: int) -> float:
    """Lcc at the MLccE penalized like BIC."""
    return row.lcc_mlcce - bic_penalty(n, row.dimension)


def normalize_criterion_name(name: str) -> str:
    """CLI spellings use dashes ("icl-tau"); the registry uses underscores."""
    name = name.strip()
    if "." in name:
        return name
    return name.lower().replace("-", "_")


class CriterionSelector:
    """
    Resolves criterion names to criterion functions.

    A criterion is any callable ``f(row: CriterionInputs, n: int) -> float``
    where larger is better.
    """

    def __init__(self, criteria: Union[str, Sequence[Union[str, Callable]]] = "all"):
        """
        Args:
            criteria: "all", a comma-separated list of names, or a list of names
                and callables. A name is either one of the built-in criteria of
                this module or a dotted import path such as
                ``my_package.my_module.my_criterion``.

        Raises:
            UnknownCriterionError: If a name cannot be resolved to a callable.
        """
        self.criteria: Dict[str, Callable] = self._get_criterion_functions(criteria)
        if not self.criteria:
            raise UnknownCriterionError("No criteria selected")

    @property
    def names(self) -> List[str]:
        return list(self.criteria)

    def _get_criterion_functions(self, func_list) -> Dict[str, Callable]:
        if isinstance(func_list, str):
            if func_list.strip().lower() == "all":
                func_list = list(BUILTIN_CRITERIA)
            else:
                func_list = [f for f in func_list.split(",") if f.strip()]
        criteria = {}
        for f in func_list:
            if callable(f):
                criteria[f.__name__] = f
                continue
            f_path = normalize_criterion_name(f)
            f_import = f_path.rsplit(".", 1)
            if len(f_import) == 1:
                # Bare names refer to the criteria defined in this module
                if f_path not in BUILTIN_CRITERIA:
                    raise UnknownCriterionError(
                        f"Unknown criterion {f!r}; expected one of {', '.join(BUILTIN_CRITERIA)} or a dotted path"
                    )
                criteria[f_path] = getattr(sys.modules[__name__], f_path)
            else:
                module_path, func_name = f_import
                try:
                    module = importlib.import_module(module_path)
                    func = getattr(module, func_name)
                except (ImportError, AttributeError) as e:
                    raise UnknownCriterionError(f"Error importing criterion {f_path}: {e}") from e
                if not callable(func):
                    raise UnknownCriterionError(f"Criterion {f_path} is not callable")
                criteria[f_path] = func
        return criteria


@dataclass(frozen=True)
class CriterionRow:
    K: int
    D_K: int
    log_lik_mle: float
    entropy_mle: float
    lcc_mlcce: float
    aic: float
    bic: float
    icl_map: float
    icl_tau: float
    lcc_icl: float


@dataclass(frozen=True)
class CriterionTable:
    """
    Criterion values per K, all oriented so that larger is better, with the
    selected K for every criterion.

    ``values`` holds every evaluated criterion (built-in and custom) keyed by
    name, then by K.
    """

    n: int
    rows: Tuple[CriterionRow, ...]
    values: Dict[str, Dict[int, float]]
    selected: Dict[str, int] = field(default_factory=dict)

    @property
    def k_values(self) -> List[int]:
        return [row.K for row in self.rows]

    def row(self, K: int) -> CriterionRow:
        for row in self.rows:
            if row.K == K:
                return row
        raise KeyError(K)


def _by_k(fits: Sequence[FitResult], estimator: Estimator, label: str) -> Dict[int, FitResult]:
    by_k = {}
    for fit in fits:
        if fit.estimator is not estimator:
            raise CriterionInputError(
                f"{label} contains a fit produced by {fit.estimator.value}, expected {estimator.value}"
            )
        if fit.spec.K in by_k:
            raise CriterionInputError(f"{label} contains two fits for K={fit.spec.K}")
        by_k[fit.spec.K] = fit
    return by_k


def compute_criteria(
    fits_mle: Sequence[FitResult],
    fits_mlcce: Sequence[FitResult],
    n: int,
    selector: CriterionSelector = None,
) -> CriterionTable:
    """
    Evaluate the selection criteria for every fitted K.

    Args:
        fits_mle (Sequence[FitResult]): One MLE fit per K.
        fits_mlcce (Sequence[FitResult]): One MLccE fit per K, same K range.
        n (int): Number of observations the fits were computed on.
        selector (CriterionSelector, optional): Extra criteria to evaluate and
            select with; the built-in criteria are always tabulated.

    Returns:
        CriterionTable: Rows in increasing K, with ``selected`` filled for
        every evaluated criterion.

    Raises:
        CriterionInputError: If the K ranges differ, n < 2, or a fit carries the
            wrong estimator tag.
    """
    if n < 2:
        raise CriterionInputError(f"Criteria need n >= 2, got n={n}")
    mle = _by_k(fits_mle, Estimator.MLE, "fits_mle")
    mlcce = _by_k(fits_mlcce, Estimator.MLCCE, "fits_mlcce")
    if not mle:
        raise CriterionInputError("No fits to compare")
    if sorted(mle) != sorted(mlcce):
        raise CriterionInputError(
            f"K ranges differ: MLE fits cover {sorted(mle)}, MLccE fits cover {sorted(mlcce)}"
        )
    selector = selector or CriterionSelector("all")

    rows = []
    values: Dict[str, Dict[int, float]] = {}
    for K in sorted(mle):
        fit, fit_cc = mle[K], mlcce[K]
        if fit.spec.dimension != fit_cc.spec.dimension:
            raise CriterionInputError(f"MLE and MLccE fits for K={K} use different models")
        inputs = CriterionInputs(
            K=K,
            dimension=fit.spec.dimension,
            log_lik_mle=fit.contrast.log_lik,
            entropy_mle=fit.contrast.entropy,
            map_log_tau_mle=fit.map_log_tau,
            lcc_mlcce=fit_cc.contrast.lcc,
        )
        row = CriterionRow(
            K=K,
            D_K=inputs.dimension,
            log_lik_mle=inputs.log_lik_mle,
            entropy_mle=inputs.entropy_mle,
            lcc_mlcce=inputs.lcc_mlcce,
            aic=aic(inputs, n),
            bic=bic(inputs, n),
            icl_map=icl_map(inputs, n),
            icl_tau=icl_tau(inputs, n),
            lcc_icl=lcc_icl(inputs, n),
        )
        rows.append(row)
        for name in BUILTIN_CRITERIA:
            values.setdefault(name, {})[K] = getattr(row, name)
        for name, func in selector.criteria.items():
            if name not in BUILTIN_CRITERIA:
                values.setdefault(name, {})[K] = float(func(inputs, n))

    table = CriterionTable(n=n, rows=tuple(rows), values=values)
    for name in values:
        table.selected[name] = select_k(table, name)
    return table


def select_k(table: CriterionTable, criterion: str) -> int:
    """
    Smallest K attaining the largest value of ``criterion``.

    Raises:
        UnknownCriterionError: If the table has no values for ``criterion``.
    """
    name = normalize_criterion_name(criterion)
    if name not in table.values:
        raise UnknownCriterionError(f"Criterion {criterion!r} is not in the table")
    by_k = table.values[name]
    best = max(by_k.values())
    return min(K for K, value in by_k.items() if value == best)


# Penalty shapes pen(n, D_K) for the penalty-condition diagnostics
def _bic_shape(n: int, dimension: int) -> float:
    return bic_penalty(n, dimension)


def _aic_shape(n: int, dimension: int) -> float:
    return float(dimension)


def _linear_shape(n: int, dimension: int) -> float:
    return float(n * dimension)


def _sqrt_shape(n: int, dimension: int) -> float:
    return math.sqrt(n) * dimension


def _constant_shape(n: int, dimension: int) -> float:
    return 1.0


PENALTY_SHAPES: Dict[str, Callable[[int, int], float]] = {
    "bic": _bic_shape,
    "aic": _aic_shape,
    "linear": _linear_shape,
    "sqrt": _sqrt_shape,
    "constant": _constant_shape,
}


def penalty_grid(
    shape: Union[str, Callable[[int, int], float]],
    dimensions: Mapping[int, int],
    n_values: Sequence[int],
) -> Dict[int, Dict[int, float]]:
    """
    Evaluate a penalty shape on an (n, K) grid.

    Args:
        shape: A name from ``PENALTY_SHAPES`` or a callable ``pen(n, D_K)``.
        dimensions: D_K for every K.
        n_values: Sample sizes.

    Returns:
        Dict[int, Dict[int, float]]: pen[n][K].
    """
    if isinstance(shape, str):
        if shape not in PENALTY_SHAPES:
            raise UnknownCriterionError(
                f"Unknown penalty shape {shape!r}; expected one of {', '.join(PENALTY_SHAPES)}"
            )
        shape = PENALTY_SHAPES[shape]
    return {int(n): {int(K): float(shape(n, D)) for K, D in dimensions.items()} for n in n_values}


@dataclass(frozen=True)
class PenaltyReport:
    """
    Finite-grid surrogate of the penalty conditions of the consistency theory.

    These checks are heuristic: the conditions are asymptotic in n and cannot
    be decided from a finite grid.

    Attributes:
        positive: pen(K) > 0 at every grid point.
        vanishing_rate: pen(K) / n strictly decreases along the n grid for every K.
        diverging_differences: pen(K) - pen(K') strictly increases along the n
            grid for every K > K'.
        failures: Human-readable description of every failed check.
    """

    positive: bool
    vanishing_rate: bool
    diverging_differences: bool
    failures: Tuple[str, ...] = ()
    heuristic: bool = True

    @property
    def passed(self) -> bool:
        return self.positive and self.vanishing_rate and self.diverging_differences


def check_penalty_family(pen: Mapping[int, Mapping[int, float]]) -> PenaltyReport:
    """
    Check a penalty, given as pen[n][K] on a grid, against the penalty conditions.

    Raises:
        ConfigurationError: If the grid has fewer than two n values or two K
            values, or the K values differ between sample sizes.
    """
    n_values = sorted(pen)
    if len(n_values) < 2:
        raise ConfigurationError("The penalty grid needs at least two sample sizes")
    k_values = sorted(pen[n_values[0]])
    if len(k_values) < 2:
        raise ConfigurationError("The penalty grid needs at least two values of K")
    if any(sorted(pen[n]) != k_values for n in n_values):
        raise ConfigurationError("Every sample size in the penalty grid must cover the same K values")

    failures = []
    positive = True
    for n in n_values:
        for K in k_values:
            if not pen[n][K] > 0:
                positive = False
                failures.append(f"pen(K={K}) = {pen[n][K]} is not positive at n={n}")

    vanishing = True
    for K in k_values:
        rates = [pen[n][K] / n for n in n_values]
        if not all(later < earlier for earlier, later in zip(rates, rates[1:])):
            vanishing = False
            failures.append(f"pen(K={K}) / n does not decrease along the n grid")

    diverging = True
    for i, K_small in enumerate(k_values):
        for K in k_values[i + 1:]:
            gaps = [pen[n][K] - pen[n][K_small] for n in n_values]
            if not all(later > earlier for earlier, later in zip(gaps, gaps[1:])):
                diverging = False
                failures.append(f"pen(K={K}) - pen(K={K_small}) does not increase along the n grid")

    report = PenaltyReport(positive, vanishing, diverging, tuple(failures))
    if not report.passed:
        logger.info(f"Penalty check failed {len(failures)} condition(s)")
    return report
