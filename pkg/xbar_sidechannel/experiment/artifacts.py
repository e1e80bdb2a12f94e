"""
This module contains the writer of experiment artifacts.
CSV files use "," separators, "\n" line endings, a header row and 17 significant digits for floats.
Every written file is recorded so the run manifest can list it together with its columns
"""
import csv
import dataclasses
import enum
import json
import pathlib
import threading
import typing
import warnings

import numpy as np
import structlog

import xbar_sidechannel.errors as errors

log = structlog.get_logger()

MANIFEST_NAME = "manifest.json"


def format_value(value: typing.Any) -> str:
    """
    Returns the CSV text of one cell
    """
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "{:.17g}".format(float(value))
    return str(value)


@dataclasses.dataclass(frozen=True)
class ArtifactRecord:
    """
    One file of the output directory
    """
    name: str
    description: str
    columns: typing.Tuple[str, ...] = ()

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {"name": self.name, "description": self.description, "columns": list(self.columns)}


class ArtifactWriter:
    """
    Writes the artifacts of one run into its output directory
    """

    def __init__(self, output_dir: typing.Union[str, pathlib.Path]):
        self.output_dir = pathlib.Path(output_dir)
        self._records = {}          # type: typing.Dict[str, ArtifactRecord]
        self._lock = threading.Lock()

    @property
    def records(self) -> typing.List[ArtifactRecord]:
        with self._lock:
            return [self._records[name] for name in sorted(self._records)]

    def prepare(self):
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise errors.ArtifactWriteError(self.output_dir, e) from e

    def path_for(self, name: str) -> pathlib.Path:
        return self.output_dir / name

    def register(self, name: str, description: str, columns: typing.Sequence[str] = ()):
        """
        Records a file written into the output directory (by this writer or by someone else)
        """
        with self._lock:
            if name in self._records:
                warnings.warn("Artifact '{}' was written twice; the last version is kept".format(name))
            self._records[name] = ArtifactRecord(name, description, tuple(columns))
        log.debug("artifact written", name=name)

    def write_csv(self, name: str, columns: typing.Sequence[str], rows: typing.Iterable[typing.Sequence],
                  description: str) -> pathlib.Path:
        """
        Writes a CSV file with a header row
        :param name: the file name inside the output directory
        :param columns: the header
        :param rows: the data rows, each as long as the header
        :param description: what the file holds, for the manifest
        """
        path = self.path_for(name)
        try:
            with open(path, "w", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(columns)
                for row in rows:
                    if len(row) != len(columns):
                        raise errors.ShapeMismatchError(
                            "Row does not match the header of '{}'".format(name), (len(row),), (len(columns),)
                        )
                    writer.writerow([format_value(v) for v in row])
        except OSError as e:
            raise errors.ArtifactWriteError(path, e) from e
        self.register(name, description, columns)
        return path

    def write_text(self, name: str, text: str, description: str) -> pathlib.Path:
        path = self.path_for(name)
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise errors.ArtifactWriteError(path, e) from e
        self.register(name, description)
        return path

    def write_json(self, name: str, document: typing.Any, description: str) -> pathlib.Path:
        return self.write_text(name, json.dumps(document, indent=2, sort_keys=True) + "\n", description)
