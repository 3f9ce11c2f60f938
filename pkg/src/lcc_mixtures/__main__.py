import typer

from lcc_mixtures.MixtureFit import classify, fit
from lcc_mixtures.PopulationReport import population
from lcc_mixtures.SimulationStudy import simulate

app = typer.Typer()

app.command(name="fit")(fit)
app.command(name="classify")(classify)
app.command(name="population")(population)
app.command(name="simulate")(simulate)

if __name__ == "__main__":
    app()
