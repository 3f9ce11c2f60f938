from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    ProgressColumn,
    SpinnerColumn,
    Task,
    TimeElapsedColumn,
    TimeRemainingColumn,
)
from rich.text import Text


class FitsPerSecondColumn(ProgressColumn):
    """Renders the speed in fits per second."""

    def render(self, task: Task) -> Text:
        if task.speed is None:
            return Text("?", style="progress.data.speed")
        return Text(f"{task.speed:.2f}fit/s", style="progress.data.speed")


class SelectionStatsColumn(ProgressColumn):
    def render(self, task: Task) -> Text:
        done = task.fields.get("done", 0)
        non_converged = task.fields.get("non_converged", 0)
        failed = task.fields.get("failed", 0)
        text = Text("(")
        text.append(f"Done: {done}", style="green")
        text.append(" | ")
        text.append(f"Not converged: {non_converged}", style="yellow")
        text.append(" | ")
        text.append(f"Failed: {failed}", style="red")
        text.append(")")
        return text


def progress_columns():
    """Column layout shared by every progress bar of the command line."""
    return (
        "{task.description}",
        SpinnerColumn(),
        BarColumn(),
        MofNCompleteColumn(),
        SelectionStatsColumn(),
        "[",
        TimeElapsedColumn(),
        "<",
        TimeRemainingColumn(),
        "/",
        FitsPerSecondColumn(),
        "]",
    )
