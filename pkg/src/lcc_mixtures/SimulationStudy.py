import asyncio
import logging
from dataclasses import replace
from enum import Enum
from pathlib import Path
from typing import Optional

import tabulate
import typer
from typing_extensions import Annotated

from lcc_mixtures._logging import set_up_cli_logging, tear_down_cli_logging
from lcc_mixtures.custom_exceptions import ConfigurationError, LccMixturesError
from lcc_mixtures.dataio import csv_text
from lcc_mixtures.MixtureFit import write_text
from lcc_mixtures.simulation import (
    Scenario,
    ScenarioReport,
    ScenarioRunner,
    frequency_rows,
    load_scenario,
    preset_scenario,
    render_summary_markdown,
)

logger = logging.getLogger(__name__)


class ScenarioPreset(Enum):
    SEPARATED = "separated"
    NULL = "null"
    OVERLAP = "overlap"
    FOUR_COMPONENT = "four-component"


def apply_overrides(
    study: Scenario,
    replicates: Optional[int] = None,
    n_values: str = "",
    seed: Optional[int] = None,
    restarts: Optional[int] = None,
    criterion: str = "",
) -> Scenario:
    """
    Apply command-line overrides to a scenario; settings not overridden keep
    the scenario's values.

    Raises:
        ConfigurationError: If an override is malformed.
    """
    overrides = {}
    if replicates is not None:
        overrides["n_replicates"] = replicates
    if n_values:
        try:
            overrides["n_values"] = tuple(int(n) for n in n_values.split(",") if n.strip())
        except ValueError as e:
            raise ConfigurationError(f"Invalid --n-values {n_values!r}") from e
    if seed is not None:
        overrides["seed"] = seed
    if restarts is not None:
        overrides["config"] = replace(study.config, n_restarts=restarts)
    if criterion:
        overrides["criteria"] = tuple(c for c in criterion.split(",") if c.strip())
    return replace(study, **overrides)


async def run_study(runner: ScenarioRunner, output_dir: Path) -> ScenarioReport:
    report = await runner.run()
    output_dir.mkdir(parents=True, exist_ok=True)
    name = runner.scenario.name
    await write_text(output_dir / f"frequencies_{name}.csv", csv_text(frequency_rows(report)))
    await write_text(output_dir / f"summary_{name}.md", render_summary_markdown(report))
    return report


app = typer.Typer()


@app.command()
def simulate(
    scenario: Annotated[
        ScenarioPreset, typer.Option(case_sensitive=False, help="Built-in scenario to run")
    ] = ScenarioPreset.SEPARATED,
    scenario_file: Annotated[
        Optional[Path],
        typer.Option(exists=True, dir_okay=False, help="JSON scenario description (overrides --scenario)"),
    ] = None,
    replicates: Annotated[Optional[int], typer.Option(help="Replicates per sample size")] = None,
    n_values: Annotated[str, typer.Option(help="Comma-separated sample sizes (default: the scenario's)")] = "",
    seed: Annotated[Optional[int], typer.Option(help="Master random seed")] = None,
    restarts: Annotated[Optional[int], typer.Option(help="Seeded restarts per fit")] = None,
    criterion: Annotated[str, typer.Option(help="Comma-separated criteria to tabulate")] = "",
    output_dir: Annotated[
        Path, typer.Option(help="Directory for tables and logs", envvar="LCC_MIXTURES_OUTPUT_DIR")
    ] = Path("."),
    threads: Annotated[
        int, typer.Option(help="Number of replicates run concurrently", envvar="LCC_MIXTURES_THREADS")
    ] = 1,
    no_progress: bool = typer.Option(
        False, "--no-progress", help="Disable progress bars (eg. for running in a CI environment)"
    ),
):
    """
    Run a Monte-Carlo selection study and tabulate how often each criterion
    selects each K.
    """
    set_up_cli_logging(output_dir)
    try:
        if scenario_file:
            study = load_scenario(scenario_file)
        else:
            study = preset_scenario(scenario.value)
        study = apply_overrides(study, replicates, n_values, seed, restarts, criterion)
        runner = ScenarioRunner(study, threads=threads, no_progress=no_progress)
        report = asyncio.run(run_study(runner, Path(output_dir)))
    except LccMixturesError as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(e.exit_code)
    finally:
        tear_down_cli_logging()

    rows = [
        [criterion_name, n, report.table.modal_k(criterion_name, n)]
        + [f"{report.table.frequency(criterion_name, n, K):.2f}" for K in study.k_values]
        for criterion_name in study.criteria
        for n in study.n_values
    ]
    headers = ["criterion", "n", "modal K"] + [f"K={K}" for K in study.k_values]
    typer.echo(tabulate.tabulate(rows, headers=headers, tablefmt="fancy_grid"))
    typer.echo(f"Failed replicates: {report.total_failed}")


if __name__ == "__main__":
    app()
