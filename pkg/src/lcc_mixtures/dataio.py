"""Dataset ingestion and model artifact persistence."""

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime as dt
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from lcc_mixtures.contrast import ContrastValues
from lcc_mixtures.custom_exceptions import (
    ArtifactFormatError,
    ConfigurationError,
    EmptyFileError,
    NonFiniteValueError,
    NonNumericCellError,
    RaggedRowError,
    UndecodableFileError,
)
from lcc_mixtures.models import Bounds, MixtureParams, ModelFamily, ModelSpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

try:
    TOOL_VERSION = metadata.version("lcc_mixtures")
except metadata.PackageNotFoundError:
    TOOL_VERSION = "0+unknown"


@dataclass(frozen=True, eq=False)
class Dataset:
    values: np.ndarray
    column_names: List[str]
    source_path: str = ""

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def read_csv(
    path: Union[str, Path],
    delimiter: str = ",",
    has_header: bool = True,
    columns: Optional[Sequence[Union[str, int]]] = None,
) -> Dataset:
    """
    Read a numeric matrix from a delimited text file.

    Args:
        path: The file to read.
        delimiter (str): Field delimiter.
        has_header (bool): Whether the first line holds column names.
        columns: Columns to keep, by name (requires a header) or 0-based index.

    Returns:
        Dataset: The n x d matrix with its column names.

    Raises:
        EmptyFileError: If the file holds no data rows.
        RaggedRowError: If a row has a different number of fields than the first.
        NonNumericCellError: If a cell does not parse as a number.
        NonFiniteValueError: If a cell is NaN or infinite.
        UndecodableFileError: If the file is not valid UTF-8.
    """
    path = Path(path)
    text = _read_text(path)
    rows = list(enumerate(csv.reader(io.StringIO(text, newline=""), delimiter=delimiter), start=1))
    # Skip blank lines, including a trailing one
    rows = [(line_number, row) for line_number, row in rows if row and any(cell.strip() for cell in row)]
    if has_header:
        if not rows:
            raise EmptyFileError(str(path))
        header = [cell.strip() for cell in rows[0][1]]
        rows = rows[1:]
    else:
        header = None
    if not rows:
        raise EmptyFileError(str(path))

    width = len(header) if header is not None else len(rows[0][1])
    header = header or [f"x{j + 1}" for j in range(width)]
    selected = _select_columns(header, columns)

    values = np.empty((len(rows), len(selected)))
    for i, (line_number, row) in enumerate(rows):
        if len(row) != width:
            raise RaggedRowError(line_number, width, len(row))
        for j, column in enumerate(selected):
            cell = row[column].strip()
            try:
                value = float(cell)
            except ValueError:
                raise NonNumericCellError(line_number, column + 1, cell) from None
            if not math.isfinite(value):
                raise NonFiniteValueError(line_number, column + 1)
            values[i, j] = value
    logger.info(f"Read {values.shape[0]} rows and {values.shape[1]} columns from {path}")
    return Dataset(values, [header[j] for j in selected], str(path))


def _select_columns(header: List[str], columns) -> List[int]:
    if not columns:
        return list(range(len(header)))
    selected = []
    for column in columns:
        if isinstance(column, int) or (isinstance(column, str) and column.isdigit() and column not in header):
            index = int(column)
        elif column in header:
            index = header.index(column)
        else:
            raise ConfigurationError(f"Column {column!r} not found; available columns: {', '.join(header)}")
        if not 0 <= index < len(header):
            raise ConfigurationError(f"Column index {index} is out of range for {len(header)} columns")
        selected.append(index)
    return selected


def csv_text(rows: Sequence[Sequence[Any]], delimiter: str = ",") -> str:
    """Render rows as CSV text; floats use their shortest round-trip representation."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter=delimiter, lineterminator="\n")
    for row in rows:
        writer.writerow([repr(float(cell)) if isinstance(cell, (float, np.floating)) else cell for cell in row])
    return buffer.getvalue()


def dataset_csv_text(dataset: Dataset, delimiter: str = ",") -> str:
    return csv_text([dataset.column_names] + [list(map(float, row)) for row in dataset.values], delimiter)


def write_csv(path: Union[str, Path], dataset: Dataset, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dataset_csv_text(dataset, delimiter))


@dataclass(frozen=True, eq=False)
class ModelArtifact:
    """
    A fitted model as persisted by the command line.

    Attributes:
        spec: The fitted model.
        params: Fitted parameters.
        contrast: log L, Ent and Lcc on the training data.
        estimator: "mle" or "mlcce".
        criteria: The criterion-table row for this K, if computed.
        seed: Seed of the run.
        tool_version: Version of this package that wrote the artifact.
        timestamp: Creation time, ISO 8601.
        fit: Convergence diagnostics (converged, n_iters, restart_index).
    """

    spec: ModelSpec
    params: MixtureParams
    contrast: ContrastValues
    estimator: str
    criteria: Optional[Dict[str, float]] = None
    seed: int = 0
    tool_version: str = TOOL_VERSION
    timestamp: str = field(default_factory=lambda: dt.now().isoformat(timespec="seconds"))
    fit: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        family = self.spec.family
        bounds = family.bounds
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
            "seed": self.seed,
            "estimator": self.estimator,
            "spec": {
                "K": self.spec.K,
                "d": self.spec.d,
                "dimension": self.spec.dimension,
                "covariance_structure": family.covariance_structure.value,
                "proportions": family.proportions.value,
                "symmetric_pair": family.symmetric_pair,
                "bounds": {
                    "prop_floor": bounds.prop_floor,
                    "var_floor": bounds.var_floor,
                    "var_ceil": bounds.var_ceil,
                    "mean_box": [list(interval) for interval in bounds.mean_box],
                },
            },
            "params": {
                "weights": self.params.weights.tolist(),
                "means": self.params.means.tolist(),
                "covariances": self.params.covariances.tolist(),
            },
            "contrast": {
                "log_lik": self.contrast.log_lik,
                "entropy": self.contrast.entropy,
                "lcc": self.contrast.lcc,
            },
            "criteria": self.criteria,
            "fit": self.fit,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelArtifact":
        """
        Raises:
            ArtifactFormatError: If the document is not a valid artifact.
        """
        try:
            if data["schema_version"] != SCHEMA_VERSION:
                raise ArtifactFormatError(f"Unsupported artifact schema version {data['schema_version']}")
            spec_data = data["spec"]
            bounds_data = spec_data["bounds"]
            family = ModelFamily(
                spec_data["covariance_structure"],
                spec_data["proportions"],
                Bounds(
                    prop_floor=bounds_data["prop_floor"],
                    var_floor=bounds_data["var_floor"],
                    var_ceil=bounds_data["var_ceil"],
                    mean_box=tuple(tuple(interval) for interval in bounds_data["mean_box"]),
                ),
                bool(spec_data.get("symmetric_pair", False)),
            )
            spec = ModelSpec(family, int(spec_data["K"]), int(spec_data["d"]))
            params_data = data["params"]
            params = MixtureParams(
                np.array(params_data["weights"], dtype=float),
                np.array(params_data["means"], dtype=float),
                np.array(params_data["covariances"], dtype=float),
            )
            contrast = ContrastValues(**{k: float(v) for k, v in data["contrast"].items()})
            if params.K != spec.K or params.d != spec.d:
                raise ArtifactFormatError("Artifact parameters do not match its model")
            return cls(
                spec=spec,
                params=params,
                contrast=contrast,
                estimator=str(data["estimator"]),
                criteria=data.get("criteria"),
                seed=int(data.get("seed", 0)),
                tool_version=str(data.get("tool_version", "")),
                timestamp=str(data.get("timestamp", "")),
                fit=dict(data.get("fit") or {}),
            )
        except ArtifactFormatError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            # ConfigurationError subclasses ValueError
            raise ArtifactFormatError(f"Malformed artifact: {e}") from e

    def serialize(self) -> str:
        # json writes floats with repr, which round-trips binary64 exactly
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "ModelArtifact":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ArtifactFormatError(f"Artifact is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ArtifactFormatError("Artifact must be a JSON object")
        return cls.from_dict(data)


def _read_text(path: Path) -> str:
    data = path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise UndecodableFileError(str(path), e.start) from e


def load_artifact(path: Union[str, Path]) -> ModelArtifact:
    return ModelArtifact.deserialize(_read_text(Path(path)))

