"""
Monte-Carlo selection studies: sample from a known mixture, fit every K with
both estimators, select K with every criterion and tabulate how often each K
is chosen.
"""

import asyncio
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.progress import Progress
from tabulate import tabulate

from lcc_mixtures._logging import NUMERIC_ISSUES_LVL_NUM
from lcc_mixtures._progress import progress_columns
from lcc_mixtures.criteria import CriterionSelector, compute_criteria
from lcc_mixtures.custom_exceptions import (
    ConfigurationError,
    LccMixturesError,
    ScenarioFailedError,
)
from lcc_mixtures.estimation import FitConfig, fit_estimators
from lcc_mixtures.gaussian import cholesky_factor, derive_rng, sample_gaussian
from lcc_mixtures.models import Bounds, MixtureParams, ModelFamily, ModelSpec
from lcc_mixtures.population import DensitySpec, DensityVariant

logger = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.05
DEFAULT_CRITERIA = ("bic", "icl_tau", "lcc_icl")


def sample_mixture(params: MixtureParams, n: int, rng: np.random.Generator, return_labels: bool = False):
    """
    Draw n observations: a component index from the weights, then a Gaussian draw.

    With a single component no index is drawn, so the stream is exactly the
    ``sample_gaussian`` stream.

    Returns:
        The n x d sample, and the component labels if ``return_labels``.
    """
    if n < 1:
        raise ConfigurationError(f"Sample size must be at least 1, got {n}")
    factors = [cholesky_factor(covariance) for covariance in params.covariances]
    if params.K == 1:
        labels = np.zeros(n, dtype=int)
        sample = sample_gaussian(params.means[0], factors[0], rng, size=n)
    else:
        labels = rng.choice(params.K, size=n, p=params.weights)
        sample = np.empty((n, params.d))
        for k, factor in enumerate(factors):
            members = labels == k
            sample[members] = sample_gaussian(params.means[k], factor, rng, size=int(members.sum()))
    return (sample, labels) if return_labels else sample


def family_for_truth(
    truth: DensitySpec, covariance_structure="full", proportions="free", prop_floor: float = 1e-3
) -> ModelFamily:
    """A family whose bounds comfortably contain any sample from ``truth``."""
    params = truth.params
    variances = np.diagonal(params.covariances, axis1=1, axis2=2)
    means = params.means
    overall_mean = params.weights @ means
    overall_var = params.weights @ (variances + means**2) - overall_mean**2
    sd = np.sqrt(overall_var)
    low = means.min(axis=0) - 7.0 * sd
    high = means.max(axis=0) + 7.0 * sd
    bounds = Bounds(
        prop_floor=prop_floor,
        var_floor=1e-4 * float(variances.min()),
        var_ceil=1e4 * float(overall_var.max()),
        mean_box=tuple(zip(low, high)),
    )
    return ModelFamily(covariance_structure, proportions, bounds)


@dataclass(frozen=True, eq=False)
class Scenario:
    """
    One simulation study.

    Attributes:
        name: Label used in reports.
        truth: The sampling density.
        family: Model family fitted at every K.
        k_range: Inclusive (k_min, k_max).
        n_values: Sample sizes.
        n_replicates: Replicates per sample size.
        criteria: Criteria tabulated in the frequency table.
        seed: Master seed; replicate r at size n uses streams derived from (seed, r, n).
        config: Estimation settings; its seed is replaced per replicate.
        expected_k: K the criteria should settle on, if known, for the trend report.
    """

    name: str
    truth: DensitySpec
    family: ModelFamily
    k_range: Tuple[int, int]
    n_values: Tuple[int, ...]
    n_replicates: int
    criteria: Tuple[str, ...] = DEFAULT_CRITERIA
    seed: int = 0
    config: FitConfig = field(default_factory=lambda: FitConfig(n_restarts=3))
    expected_k: Optional[int] = None

    def __post_init__(self):
        k_min, k_max = (int(k) for k in self.k_range)
        if not 1 <= k_min <= k_max:
            raise ConfigurationError(f"k_range must satisfy 1 <= k_min <= k_max, got {self.k_range}")
        if self.n_replicates < 1:
            raise ConfigurationError("n_replicates must be at least 1")
        if not self.n_values or min(self.n_values) < 2:
            raise ConfigurationError("n_values must be a nonempty list of sample sizes >= 2")
        object.__setattr__(self, "k_range", (k_min, k_max))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        selector = CriterionSelector(list(self.criteria))
        object.__setattr__(self, "criteria", tuple(selector.names))
        self.family.check(k_max, self.truth.d)

    @property
    def k_values(self) -> List[int]:
        return list(range(self.k_range[0], self.k_range[1] + 1))

    @property
    def selector(self) -> CriterionSelector:
        return CriterionSelector(list(self.criteria))


def preset_scenario(name: str, n_replicates: int = 50, seed: int = 0, n_values: Sequence[int] = None) -> Scenario:
    """
    Built-in studies.

    separated: 0.5 N(-5, 1) + 0.5 N(5, 1), K in 1..4, n = 1000.
    null: N(0, 1), K in 1..3, n in (200, 2000).
    overlap: 0.5 N(-0.5, 1) + 0.5 N(0.5, 1), K in 1..3, n = 2000.
    four-component: an overlapping pair plus two separated components in d = 2, K in 1..6, n = 1000.
    """
    if name == "separated":
        truth = DensitySpec.mixture([0.5, 0.5], [-5.0, 5.0], [1.0, 1.0])
        k_range, default_n, expected = (1, 4), (1000,), 2
    elif name == "null":
        truth = DensitySpec.gaussian(0.0, 1.0)
        k_range, default_n, expected = (1, 3), (200, 2000), 1
    elif name == "overlap":
        truth = DensitySpec.mixture([0.5, 0.5], [-0.5, 0.5], [1.0, 1.0])
        k_range, default_n, expected = (1, 3), (2000,), None
    elif name == "four-component":
        means = np.array([[0.0, 0.0], [1.5, 0.0], [8.0, 8.0], [-8.0, 8.0]])
        covariances = np.array([np.eye(2) * 0.5] * 4)
        truth = DensitySpec(DensityVariant.GAUSSIAN_MIXTURE, MixtureParams(np.full(4, 0.25), means, covariances))
        k_range, default_n, expected = (1, 6), (1000,), None
    else:
        raise ConfigurationError(
            f"Unknown scenario {name!r}; expected one of separated, null, overlap, four-component"
        )
    return Scenario(
        name=name,
        truth=truth,
        family=family_for_truth(truth),
        k_range=k_range,
        n_values=tuple(n_values or default_n),
        n_replicates=n_replicates,
        seed=seed,
        expected_k=expected,
    )


def scenario_from_dict(data: dict) -> Scenario:
    """
    Build a scenario from a JSON-style mapping::

        {"name": "...", "truth": {"weights": [...], "means": [[...], ...],
         "covariances": [[[...]]]} or "variances": [...] for d = 1,
         "covariance_structure": "full", "proportions": "free",
         "k_range": [1, 3], "n_values": [200, 2000], "n_replicates": 50,
         "criteria": ["bic", "lcc_icl"], "seed": 0, "n_restarts": 3,
         "fit": {"max_em_iters": 200, "init_scheme": "random_responsibilities"},
         "expected_k": 1}

    "fit" holds any other ``FitConfig`` settings.

    Raises:
        ConfigurationError: If a key is missing or malformed.
    """
    try:
        truth_data = data["truth"]
        weights = truth_data["weights"]
        if "variances" in truth_data:
            truth = DensitySpec.mixture(weights, truth_data["means"], truth_data["variances"])
        else:
            truth = DensitySpec(
                DensityVariant.GAUSSIAN_MIXTURE,
                MixtureParams(
                    np.asarray(weights, dtype=float),
                    np.asarray(truth_data["means"], dtype=float),
                    np.asarray(truth_data["covariances"], dtype=float),
                ),
            )
        family = family_for_truth(
            truth,
            data.get("covariance_structure", "full"),
            data.get("proportions", "free"),
            float(data.get("prop_floor", 1e-3)),
        )
        return Scenario(
            name=str(data.get("name", "custom")),
            truth=truth,
            family=family,
            k_range=tuple(data["k_range"]),
            n_values=tuple(data["n_values"]),
            n_replicates=int(data["n_replicates"]),
            criteria=tuple(data.get("criteria", DEFAULT_CRITERIA)),
            seed=int(data.get("seed", 0)),
            config=FitConfig(**{"n_restarts": int(data.get("n_restarts", 3)), **data.get("fit", {})}),
            expected_k=data.get("expected_k"),
        )
    except LccMixturesError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"Malformed scenario description: {e!r}") from e


def load_scenario(path: Path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Could not read scenario file {path}: {e}") from e
    return scenario_from_dict(data)


@dataclass(frozen=True)
class ReplicateOutcome:
    n: int
    replicate: int
    selected: Dict[str, int]
    non_converged: int = 0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_replicate(scenario: Scenario, n: int, replicate: int) -> ReplicateOutcome:
    """
    Sample, fit every K with both estimators and select K with every criterion.

    Only errors raised by this package count as a failed replicate; anything
    else propagates.
    """
    data_rng = derive_rng(scenario.seed, replicate, n, 0)
    fit_seed = int(derive_rng(scenario.seed, replicate, n, 1).integers(2**63))
    config = replace(scenario.config, seed=fit_seed)
    try:
        sample = sample_mixture(scenario.truth.params, n, data_rng)
        fits_mle, fits_mlcce = [], []
        for K in scenario.k_values:
            mle, mlcce = fit_estimators(sample, ModelSpec(scenario.family, K, scenario.truth.d), config)
            fits_mle.append(mle)
            fits_mlcce.append(mlcce)
        table = compute_criteria(fits_mle, fits_mlcce, n, scenario.selector)
    except LccMixturesError as e:
        logger.log(NUMERIC_ISSUES_LVL_NUM, f"Scenario {scenario.name}: replicate {replicate} at n={n} failed: {e}")
        return ReplicateOutcome(n, replicate, {}, error=str(e))
    non_converged = sum(not fit.converged for fit in fits_mle + fits_mlcce)
    return ReplicateOutcome(n, replicate, dict(table.selected), non_converged)


@dataclass(frozen=True)
class FrequencyTable:
    """
    Selection frequencies per (criterion, n, K) with the number of successful
    replicates they were computed from.
    """

    frequencies: Dict[Tuple[str, int, int], float]
    replicates: Dict[Tuple[str, int], int]

    def frequency(self, criterion: str, n: int, K: int) -> float:
        return self.frequencies.get((criterion, n, K), 0.0)

    def modal_k(self, criterion: str, n: int) -> int:
        """Most frequently selected K; ties go to the smallest K."""
        cells = {K: f for (c, m, K), f in self.frequencies.items() if c == criterion and m == n}
        best = max(cells.values())
        return min(K for K, f in cells.items() if f == best)

    def rows(self) -> List[Tuple[str, int, int, float, int]]:
        """(criterion, n, K, frequency, replicates), sorted."""
        return [
            (criterion, n, K, frequency, self.replicates[(criterion, n)])
            for (criterion, n, K), frequency in sorted(self.frequencies.items())
        ]


def frequency_table(scenario: Scenario, outcomes: Sequence[ReplicateOutcome]) -> FrequencyTable:
    frequencies = {}
    replicates = {}
    for n in scenario.n_values:
        succeeded = [o for o in outcomes if o.n == n and not o.failed]
        for criterion in scenario.criteria:
            replicates[(criterion, n)] = len(succeeded)
            for K in scenario.k_values:
                count = sum(o.selected[criterion] == K for o in succeeded)
                frequencies[(criterion, n, K)] = count / len(succeeded) if succeeded else 0.0
    return FrequencyTable(frequencies, replicates)


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    """
    Everything a simulation run produced.

    Attributes:
        agreement: Per n, fraction of successful replicates where ICL (tau)
            and Lcc-ICL select the same K.
        trend: Per criterion, the frequency of ``expected_k`` along the n grid
            (empty when the scenario has no expected K).
    """

    scenario: Scenario
    table: FrequencyTable
    outcomes: Tuple[ReplicateOutcome, ...]
    failed: Dict[int, int]
    non_converged: Dict[int, int]
    agreement: Dict[int, float]
    trend: Dict[str, List[float]]

    @property
    def total_failed(self) -> int:
        return sum(self.failed.values())


def summarize(scenario: Scenario, outcomes: Sequence[ReplicateOutcome]) -> ScenarioReport:
    table = frequency_table(scenario, outcomes)
    failed, non_converged, agreement = {}, {}, {}
    for n in scenario.n_values:
        at_n = [o for o in outcomes if o.n == n]
        succeeded = [o for o in at_n if not o.failed]
        failed[n] = len(at_n) - len(succeeded)
        non_converged[n] = sum(o.non_converged for o in succeeded)
        agree = sum(o.selected["icl_tau"] == o.selected["lcc_icl"] for o in succeeded)
        agreement[n] = agree / len(succeeded) if succeeded else float("nan")
    trend = {}
    if scenario.expected_k is not None:
        for criterion in scenario.criteria:
            trend[criterion] = [table.frequency(criterion, n, scenario.expected_k) for n in scenario.n_values]
    return ScenarioReport(scenario, table, tuple(outcomes), failed, non_converged, agreement, trend)


class ScenarioRunner:
    """Runs the replicates of a scenario concurrently, at most ``threads`` at a time."""

    def __init__(self, scenario: Scenario, threads: int = 1, no_progress: bool = True):
        if threads < 1:
            raise ConfigurationError("threads must be at least 1")
        self.scenario = scenario
        self.threads = threads
        self.no_progress = no_progress
        self.lock = asyncio.Lock()
        self.stats = {"done": 0, "non_converged": 0, "failed": 0}

    async def run(self) -> ScenarioReport:
        """
        Raises:
            ScenarioFailedError: If more than 5% of the replicates failed.
        """
        scenario = self.scenario
        semaphore = asyncio.Semaphore(self.threads)
        jobs = [(n, r) for n in scenario.n_values for r in range(scenario.n_replicates)]
        with Progress(*progress_columns()) as progress:
            task = progress.add_task(
                f"Scenario {scenario.name}: ",
                total=len(jobs),
                visible=not self.no_progress,
                **self.stats,
            )

            async def run_one(n: int, replicate: int) -> ReplicateOutcome:
                async with semaphore:
                    outcome = await asyncio.to_thread(run_replicate, scenario, n, replicate)
                async with self.lock:
                    self.stats["done"] += 1
                    self.stats["non_converged"] += outcome.non_converged
                    self.stats["failed"] += outcome.failed
                    progress.update(task, advance=1, **self.stats)
                return outcome

            outcomes = await asyncio.gather(*(run_one(n, r) for n, r in jobs))
        report = summarize(scenario, outcomes)
        logger.info(
            f"Scenario {scenario.name}: {len(jobs)} replicates, {report.total_failed} failed, "
            f"{sum(report.non_converged.values())} non-converged fits"
        )
        if report.total_failed > MAX_FAILED_FRACTION * len(jobs):
            raise ScenarioFailedError(report.total_failed, len(jobs))
        return report


def run_scenario(scenario: Scenario, threads: int = 1) -> FrequencyTable:
    """Run a scenario and return its selection frequencies."""
    return asyncio.run(ScenarioRunner(scenario, threads).run()).table


def frequency_rows(report: ScenarioReport) -> List[List]:
    """CSV rows, header first: criterion, n, K, frequency, replicates."""
    rows = [["criterion", "n", "K", "frequency", "replicates"]]
    rows.extend([criterion, n, K, repr(frequency), count] for criterion, n, K, frequency, count in report.table.rows())
    return rows


def render_summary_markdown(report: ScenarioReport) -> str:
    scenario = report.scenario
    lines = [
        f"# Scenario `{scenario.name}`",
        "",
        f"K range {scenario.k_range[0]}..{scenario.k_range[1]}, "
        f"{scenario.n_replicates} replicates per n, seed {scenario.seed}.",
        "",
        "## Selection frequencies",
        "",
    ]
    headers = ["criterion", "n"] + [f"K={K}" for K in scenario.k_values] + ["modal K"]
    body = [
        [criterion, n]
        + [f"{report.table.frequency(criterion, n, K):.2f}" for K in scenario.k_values]
        + [report.table.modal_k(criterion, n) if report.table.replicates[(criterion, n)] else "-"]
        for criterion in scenario.criteria
        for n in scenario.n_values
    ]
    lines += [tabulate(body, headers=headers, tablefmt="github"), ""]
    lines += ["## Diagnostics", ""]
    diagnostics = [
        [n, report.failed[n], report.non_converged[n], f"{report.agreement[n]:.2f}"] for n in scenario.n_values
    ]
    lines += [
        tabulate(
            diagnostics,
            headers=["n", "failed replicates", "non-converged fits", "ICL/Lcc-ICL agreement"],
            tablefmt="github",
        ),
        "",
    ]
    if report.trend:
        lines += [
            f"## Frequency of K = {scenario.expected_k} along n",
            "",
            "Finite-n surrogate of selection consistency: the frequency should not fall as n grows.",
            "",
            tabulate(
                [[criterion] + [f"{f:.2f}" for f in values] for criterion, values in report.trend.items()],
                headers=["criterion"] + [f"n={n}" for n in scenario.n_values],
                tablefmt="github",
            ),
            "",
        ]
    return "\n".join(lines)
