import asyncio
import logging
from dataclasses import asdict
from datetime import datetime as dt
from pathlib import Path
from typing import Dict, List, Optional

import aiofiles
import numpy as np
import tabulate
import typer
from rich.progress import Progress
from typing_extensions import Annotated

from lcc_mixtures._logging import set_up_cli_logging, tear_down_cli_logging
from lcc_mixtures._progress import progress_columns
from lcc_mixtures.contrast import responsibilities
from lcc_mixtures.criteria import CriterionSelector, CriterionTable, compute_criteria
from lcc_mixtures.custom_exceptions import ConfigurationError, DimensionMismatchError, LccMixturesError
from lcc_mixtures.dataio import Dataset, ModelArtifact, csv_text, load_artifact, read_csv
from lcc_mixtures.estimation import FitConfig, FitResult, fit_estimators
from lcc_mixtures.models import CovarianceStructure, ModelFamily, ModelSpec, Proportions

logger = logging.getLogger(__name__)

CRITERION_COLUMNS = ["aic", "bic", "icl_map", "icl_tau", "lcc_icl"]


async def write_text(path: Path, text: str) -> None:
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write(text)


class ClusteringJob:
    """
    Fits both estimators for every K of a range, computes the selection
    criteria and writes the artifacts and criterion tables.

    Args:
        dataset (Dataset): The observations.
        family (ModelFamily): Model family fitted at every K.
        k_min (int): Smallest K.
        k_max (int): Largest K.
        config (FitConfig): Estimation settings.
        selector (CriterionSelector): Criteria to report.
        output_dir (Path): Where artifacts and tables are written.
        threads (int): Maximum number of K values fitted at once.
        no_progress (bool): Disable the progress bar.
    """

    def __init__(
        self,
        dataset: Dataset,
        family: ModelFamily,
        k_min: int,
        k_max: int,
        config: FitConfig,
        selector: CriterionSelector,
        output_dir: Path,
        threads: int = 1,
        no_progress: bool = False,
    ) -> None:
        if not 1 <= k_min <= k_max:
            raise ConfigurationError(f"Need 1 <= k-min <= k-max, got {k_min} and {k_max}")
        if threads < 1:
            raise ConfigurationError("threads must be at least 1")
        self.dataset = dataset
        self.family = family
        self.k_values = list(range(k_min, k_max + 1))
        self.specs = [ModelSpec(family, K, dataset.d) for K in self.k_values]
        self.config = config
        self.selector = selector
        self.output_dir = Path(output_dir)
        self.threads = threads
        self.no_progress = no_progress
        self.timestamp = dt.now().isoformat(timespec="seconds")
        self.fits: Dict[int, tuple] = {}
        self.table: Optional[CriterionTable] = None
        self.written: List[Path] = []
        self.stats = {"done": 0, "non_converged": 0, "failed": 0}

    async def do_work(self) -> None:
        """Fit every K, at most ``threads`` at a time."""
        semaphore = asyncio.Semaphore(self.threads)
        lock = asyncio.Lock()
        with Progress(*progress_columns()) as progress:
            task = progress.add_task(
                "Fitting mixtures: ", total=len(self.specs), visible=not self.no_progress, **self.stats
            )

            async def fit_one(spec: ModelSpec):
                async with semaphore:
                    fits = await asyncio.to_thread(fit_estimators, self.dataset.values, spec, self.config)
                async with lock:
                    self.stats["done"] += 1
                    self.stats["non_converged"] += sum(not fit.converged for fit in fits)
                    progress.update(task, advance=1, **self.stats)
                return spec.K, fits

            results = await asyncio.gather(*(fit_one(spec) for spec in self.specs))
        self.fits = dict(results)
        self.table = compute_criteria(
            [self.fits[K][0] for K in self.k_values],
            [self.fits[K][1] for K in self.k_values],
            self.dataset.n,
            self.selector,
        )

    def _artifact(self, fit: FitResult) -> ModelArtifact:
        K = fit.spec.K
        criteria = asdict(self.table.row(K))
        criteria.update({name: values[K] for name, values in self.table.values.items() if name not in criteria})
        return ModelArtifact(
            spec=fit.spec,
            params=fit.params,
            contrast=fit.contrast,
            estimator=fit.estimator.value,
            criteria=criteria,
            seed=self.config.seed,
            timestamp=self.timestamp,
            fit={"converged": fit.converged, "n_iters": fit.n_iters, "restart_index": fit.restart_index},
        )

    def criteria_rows(self) -> List[List]:
        extra = [name for name in self.table.values if name not in CRITERION_COLUMNS]
        header = ["K", "D_K", "log_lik_mle", "entropy_mle", "lcc_mlcce"] + CRITERION_COLUMNS + extra
        rows = [header]
        for row in self.table.rows:
            values = asdict(row)
            rows.append(
                [values[h] for h in header[: 5 + len(CRITERION_COLUMNS)]]
                + [self.table.values[name][row.K] for name in extra]
            )
        return rows

    def selections(self) -> Dict[str, int]:
        return {name: self.table.selected[name] for name in self.selector.names}

    def render_markdown(self) -> str:
        rows = self.criteria_rows()
        lines = [
            "# Model selection",
            "",
            f"n = {self.dataset.n}, d = {self.dataset.d}, "
            f"model {self.family.covariance_structure.value}/{self.family.proportions.value}, seed {self.config.seed}.",
            "",
            tabulate.tabulate(rows[1:], headers=rows[0], tablefmt="github", floatfmt=".6f"),
            "",
            "## Selected K",
            "",
            tabulate.tabulate(list(self.selections().items()), headers=["criterion", "K"], tablefmt="github"),
            "",
        ]
        return "\n".join(lines)

    async def wrap_up(self) -> Dict[str, int]:
        """Write every output once all fits are done; returns the selected K per criterion."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        outputs = {}
        for K in self.k_values:
            for fit in self.fits[K]:
                outputs[self.output_dir / f"model_K{K}_{fit.estimator.value}.json"] = self._artifact(fit).serialize()
        outputs[self.output_dir / "criteria.csv"] = csv_text(self.criteria_rows())
        outputs[self.output_dir / "criteria.md"] = self.render_markdown()
        for path, text in outputs.items():
            self.written.append(path)
            await write_text(path, text)
        logger.info(f"Wrote {len(outputs)} files to {self.output_dir}")
        return self.selections()

    def remove_partial_outputs(self) -> None:
        for path in self.written:
            if path.exists():
                path.unlink()
                logger.info(f"Removed partial output {path}")


async def run_job(job: ClusteringJob) -> Dict[str, int]:
    completed = False
    try:
        await job.do_work()
        selected = await job.wrap_up()
        completed = True
        return selected
    finally:
        if not completed:
            job.remove_partial_outputs()


def _load_dataset(input_path: Path, delimiter: str, no_header: bool, columns: str) -> Dataset:
    selected = [c.strip() for c in columns.split(",") if c.strip()] if columns else None
    return read_csv(input_path, delimiter=delimiter, has_header=not no_header, columns=selected)


app = typer.Typer()


@app.command()
def fit(
    input_path: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="CSV file of observations, one row per observation")],
    k_min: Annotated[int, typer.Option(help="Smallest number of components")] = 1,
    k_max: Annotated[int, typer.Option(help="Largest number of components")] = 4,
    model: Annotated[
        CovarianceStructure, typer.Option(case_sensitive=False, help="Covariance structure of the components")
    ] = CovarianceStructure.FULL,
    proportions: Annotated[
        Proportions, typer.Option(case_sensitive=False, help="Free or equal mixing proportions")
    ] = Proportions.FREE,
    criterion: Annotated[
        str,
        typer.Option(
            help=(
                "Comma-separated criteria to report (aic, bic, icl-map, icl-tau, lcc-icl), 'all', "
                "or python import paths to criterion functions"
            )
        ),
    ] = "all",
    restarts: Annotated[int, typer.Option(help="Number of seeded restarts per K")] = 10,
    seed: Annotated[int, typer.Option(help="Master random seed")] = 0,
    max_iter: Annotated[int, typer.Option(help="Maximum EM iterations")] = 500,
    tol: Annotated[float, typer.Option(help="Relative log-likelihood change that stops EM")] = 1e-8,
    var_floor: Annotated[
        Optional[float], typer.Option(help="Lower bound on covariance eigenvalues (default: scaled to the data)")
    ] = None,
    prop_floor: Annotated[float, typer.Option(help="Lower bound on mixing proportions")] = 1e-3,
    output_dir: Annotated[
        Path, typer.Option(help="Directory for artifacts, tables and logs", envvar="LCC_MIXTURES_OUTPUT_DIR")
    ] = Path("."),
    threads: Annotated[
        int, typer.Option(help="Number of K values fitted concurrently", envvar="LCC_MIXTURES_THREADS")
    ] = 1,
    delimiter: Annotated[str, typer.Option(help="CSV field delimiter")] = ",",
    no_header: bool = typer.Option(False, "--no-header", help="The CSV file has no header line"),
    columns: Annotated[str, typer.Option(help="Comma-separated columns to use, by name or 0-based index")] = "",
    no_progress: bool = typer.Option(
        False, "--no-progress", help="Disable progress bars (eg. for running in a CI environment)"
    ),
    verbose: bool = typer.Option(False, "--verbose", help="Show per-fit messages on the console"),
):
    """
    Fit Gaussian mixtures by maximum likelihood and by maximum conditional
    classification likelihood for every K, and select K with each criterion.
    """
    set_up_cli_logging(output_dir, verbose)
    try:
        dataset = _load_dataset(input_path, delimiter, no_header, columns)
        family = ModelFamily.for_data(dataset.values, model, proportions, prop_floor=prop_floor, var_floor=var_floor)
        config = FitConfig(n_restarts=restarts, max_em_iters=max_iter, em_tol=tol, seed=seed)
        job = ClusteringJob(
            dataset,
            family,
            k_min,
            k_max,
            config,
            CriterionSelector(criterion),
            output_dir,
            threads=threads,
            no_progress=no_progress,
        )
        selected = asyncio.run(run_job(job))
    except LccMixturesError as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(e.exit_code)
    finally:
        tear_down_cli_logging()
    typer.echo(tabulate.tabulate(list(selected.items()), headers=["criterion", "selected K"], tablefmt="fancy_grid"))


def classification_rows(artifact: ModelArtifact, dataset: Dataset) -> List[List]:
    """Rows of the classification report: row, label, tau_1..tau_K, h_K."""
    if dataset.d != artifact.spec.d:
        raise DimensionMismatchError(f"The artifact has d={artifact.spec.d} but the dataset has d={dataset.d}")
    resp = responsibilities(artifact.params, dataset.values)
    labels = np.argmax(resp.log_weighted, axis=1)
    entropies = resp.entropy_rows()
    header = ["row", "label"] + [f"tau_{k + 1}" for k in range(resp.K)] + ["h_K"]
    rows = [header]
    for i in range(resp.n):
        rows.append([i, int(labels[i])] + [float(t) for t in resp.entries[i]] + [float(entropies[i])])
    return rows


@app.command()
def classify(
    artifact_path: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="Model artifact written by the fit command")],
    input_path: Annotated[Path, typer.Argument(exists=True, dir_okay=False, help="CSV file of observations to classify")],
    output: Annotated[Optional[Path], typer.Option(help="Output CSV (default: <output-dir>/labels.csv)")] = None,
    output_dir: Annotated[
        Path, typer.Option(help="Directory for the report and logs", envvar="LCC_MIXTURES_OUTPUT_DIR")
    ] = Path("."),
    delimiter: Annotated[str, typer.Option(help="CSV field delimiter")] = ",",
    no_header: bool = typer.Option(False, "--no-header", help="The CSV file has no header line"),
    columns: Annotated[str, typer.Option(help="Comma-separated columns to use, by name or 0-based index")] = "",
):
    """
    Assign observations to components by the MAP rule, with their
    responsibilities and entropy contributions.
    """
    set_up_cli_logging(output_dir)
    output = output or Path(output_dir) / "labels.csv"
    try:
        artifact = load_artifact(artifact_path)
        dataset = _load_dataset(input_path, delimiter, no_header, columns)
        rows = classification_rows(artifact, dataset)
        output.parent.mkdir(parents=True, exist_ok=True)
        try:
            asyncio.run(write_text(output, csv_text(rows)))
        except BaseException:
            output.unlink(missing_ok=True)
            raise
    except LccMixturesError as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(e.exit_code)
    finally:
        tear_down_cli_logging()
    mean_entropy = float(np.mean([row[-1] for row in rows[1:]]))
    typer.echo(f"Classified {len(rows) - 1} rows into {artifact.spec.K} components; mean h_K = {mean_entropy:.6f}")


if __name__ == "__main__":
    app()
