import logging
from enum import Enum
from pathlib import Path
from typing import List, Tuple

import tabulate
import typer
from typing_extensions import Annotated

from lcc_mixtures._logging import set_up_cli_logging, tear_down_cli_logging
from lcc_mixtures.custom_exceptions import ConfigurationError, LccMixturesError
from lcc_mixtures.population import (
    DensitySpec,
    QuadratureKind,
    QuadratureRule,
    expected_contrast,
    population_minima,
    population_spec,
    smallest_minimizing_k,
)

logger = logging.getLogger(__name__)


class QuadratureChoice(Enum):
    TRAPEZOID = "trapezoid"
    GAUSS_HERMITE = "gauss-hermite"


def parse_truth_mixture(text: str) -> DensitySpec:
    """
    Parse "w,m,v;w,m,v;..." into a univariate mixture (one component per
    ";"-separated triple of weight, mean and variance).

    Raises:
        ConfigurationError: If the text is malformed or the parameters invalid.
    """
    weights, means, variances = [], [], []
    for part in text.split(";"):
        if not part.strip():
            continue
        fields = [f.strip() for f in part.split(",")]
        if len(fields) != 3:
            raise ConfigurationError(f"Expected 'weight,mean,variance', got {part!r}")
        try:
            w, m, v = (float(f) for f in fields)
        except ValueError as e:
            raise ConfigurationError(f"Non-numeric component {part!r}") from e
        weights.append(w)
        means.append(m)
        variances.append(v)
    if not weights:
        raise ConfigurationError("The truth mixture has no components")
    if len(weights) == 1:
        return DensitySpec.gaussian(means[0], variances[0])
    return DensitySpec.mixture(weights, means, variances)


def report_rows(minima: dict) -> List[List]:
    rows = []
    for K, minimum in sorted(minima.items()):
        params = minimum.params
        if K == 1:
            rows.append([K, "gaussian", float(params.means[0, 0]), float(params.covariances[0, 0, 0]), minimum.value])
        else:
            center = 0.5 * float(params.means[0, 0] + params.means[1, 0])
            half_distance = 0.5 * abs(float(params.means[1, 0] - params.means[0, 0]))
            rows.append(
                [
                    K,
                    f"symmetric pair about {center:g}",
                    half_distance,
                    float(params.covariances[0, 0, 0]),
                    minimum.value,
                ]
            )
    return rows


app = typer.Typer()


@app.command()
def population(
    truth_mixture: Annotated[
        str,
        typer.Option(help="True density as 'weight,mean,variance;...' (default: standard normal)"),
    ] = "1,0,1",
    k_range: Annotated[Tuple[int, int], typer.Option(help="Smallest and largest K to compare (K = 1 or 2)")] = (1, 2),
    quadrature: Annotated[
        QuadratureChoice, typer.Option(case_sensitive=False, help="Quadrature rule for the expected contrast")
    ] = QuadratureChoice.TRAPEZOID,
    kl: bool = typer.Option(
        False, "--kl", help="Also minimize the expected negative log-likelihood over the same models"
    ),
    verify: bool = typer.Option(False, "--verify", help="Check every minimum on a refined quadrature rule"),
    output_dir: Annotated[
        Path, typer.Option(help="Directory for the log files", envvar="LCC_MIXTURES_OUTPUT_DIR")
    ] = Path("."),
):
    """
    Minimize the population conditional classification loss of one-dimensional
    models under a known density and report the best number of classes.
    """
    set_up_cli_logging(output_dir)
    try:
        f0 = parse_truth_mixture(truth_mixture)
        k_min, k_max = k_range
        if not 1 <= k_min <= k_max:
            raise ConfigurationError(f"Need 1 <= k-min <= k-max, got {k_min} and {k_max}")
        specs = [population_spec(f0, K) for K in range(k_min, k_max + 1)]
        kind = QuadratureKind.TRAPEZOID if quadrature is QuadratureChoice.TRAPEZOID else QuadratureKind.GAUSS_HERMITE
        rule = QuadratureRule.for_density(f0, kind)
        minima = population_minima(f0, specs, rule=rule)
        if verify:
            for minimum in minima.values():
                expected_contrast(f0, minimum.params, rule, verify=True)
        kl_minima = population_minima(f0, specs, rule=rule, include_entropy=False) if kl else {}
    except LccMixturesError as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(e.exit_code)
    finally:
        tear_down_cli_logging()

    headers = ["K", "model", "mu", "sigma^2", "E[-Lcc]"]
    typer.echo(tabulate.tabulate(report_rows(minima), headers=headers, tablefmt="fancy_grid", floatfmt=".6f"))
    typer.echo(f"K0 = {smallest_minimizing_k(minima)}")
    if kl_minima:
        headers[-1] = "E[-log L]"
        typer.echo(tabulate.tabulate(report_rows(kl_minima), headers=headers, tablefmt="fancy_grid", floatfmt=".6f"))


if __name__ == "__main__":
    app()
