"""
This module contains the attacker-side power analysis of a crossbar:
extracting the weight column 1-norms from supply current readings,
and measuring how well those 1-norms track the loss sensitivity of each input
"""
import csv
import dataclasses
import json
import pathlib
import typing

import numpy as np
import numpy.typing as npt
import structlog

import xbar_sidechannel.crossbar as crossbar
import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.errors as errors
import xbar_sidechannel.linalg_stats as linalg_stats
import xbar_sidechannel.model as model

log = structlog.get_logger()

# rows per chunk when computing per-sample sensitivities
SENSITIVITY_CHUNK = 1024


@dataclasses.dataclass(frozen=True)
class ColumnNormProfile:
    """
    The extracted G_j values: the 1-norm of every weight column, one probe per input
    """
    norms: npt.NDArray[np.float64]
    probe_count: int

    def __post_init__(self):
        norms = np.array(linalg_stats.as_vector(self.norms, "norms"))
        if np.any(norms < 0):
            raise ValueError("Column 1-norms must be non-negative")
        norms.setflags(write=False)
        object.__setattr__(self, "norms", norms)

    @property
    def strongest_column(self) -> int:
        """
        Returns the input with the largest 1-norm (ties to the lowest index)
        """
        return linalg_stats.argmax_tiebreak_low(self.norms)

    def top_columns(self, n: int) -> np.ndarray:
        """
        Returns the n inputs with the largest 1-norms, largest first, ties to the lowest index
        :param n: how many inputs, at most N
        """
        if n < 0 or n > self.norms.size:
            raise errors.SampleSizeError("Can not pick {} of {} columns".format(n, self.norms.size))
        return np.argsort(-self.norms, kind="stable")[:n]


@dataclasses.dataclass(frozen=True)
class CorrelationReport:
    """
    Correlation between loss sensitivity magnitudes and column 1-norms, over one or more runs.

    mean_correlation averages the per-sample correlations; correlation_of_mean correlates
    the dataset-mean sensitivity. Both are averaged over runs
    """
    mean_correlation: float
    correlation_of_mean: float
    per_run_mean_correlation: typing.Tuple[float, ...]
    per_run_correlation_of_mean: typing.Tuple[float, ...]

    @property
    def runs(self) -> int:
        return len(self.per_run_mean_correlation)

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "mean_correlation": self.mean_correlation,
            "correlation_of_mean": self.correlation_of_mean,
            "runs": self.runs,
            "per_run_mean_correlation": list(self.per_run_mean_correlation),
            "per_run_correlation_of_mean": list(self.per_run_correlation_of_mean),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def extract_column_norms(
        oracle: crossbar.CrossbarInstance, rng: typing.Optional[np.random.Generator] = None
) -> ColumnNormProfile:
    """
    Measures every G_j by driving input j at vdd with all other inputs grounded: G_j = i_total / vdd.
    Takes exactly N power readings. Noisy readings can come out negative and are clamped to 0
    :param oracle: the crossbar under attack
    :param rng: the measurement noise source, see CrossbarInstance.total_current
    """
    norms = np.zeros(oracle.num_inputs)
    probe = np.zeros(oracle.num_inputs)

    for j in range(oracle.num_inputs):
        probe[j] = oracle.vdd
        norms[j] = oracle.total_current(probe, rng) / oracle.vdd
        probe[j] = 0.0

    log.debug("column norms extracted", probes=oracle.num_inputs)
    return ColumnNormProfile(np.maximum(norms, 0.0), oracle.num_inputs)


def _sensitivity_chunks(m: model.LinearLayerModel, ds: dataset.LabeledDataset) -> typing.Iterator[np.ndarray]:
    targets = ds.targets()
    for start in range(0, len(ds), SENSITIVITY_CHUNK):
        stop = start + SENSITIVITY_CHUNK
        yield np.abs(m.input_sensitivity_batch(ds.inputs[start:stop], targets[start:stop]))


def sensitivity_heatmap(m: model.LinearLayerModel, ds: dataset.LabeledDataset) -> np.ndarray:
    """
    Returns the mean of |∂L/∂u_j| over the dataset for every input j
    :param m: the trained model
    :param ds: the dataset to average over
    """
    if len(ds) == 0:
        raise errors.EmptyInputError("Can not average sensitivities over an empty dataset")

    total = np.zeros(m.num_inputs)
    for chunk in _sensitivity_chunks(m, ds):
        total += chunk.sum(axis=0)
    return total / len(ds)


def sensitivity_upper_bound(m: model.LinearLayerModel, u: npt.ArrayLike, target: npt.ArrayLike) -> np.ndarray:
    """
    Returns Σ_i |∂L/∂s_i|·|w_ij| for every input j, which bounds |∂L/∂u_j| from above.
    ∂L/∂s is taken through the full activation Jacobian, so the bound also holds for softmax
    :param m: the model
    :param u: the input vector
    :param target: the one-hot target
    """
    _, y_hat = m.forward(u)
    delta = m.output_gradient(y_hat[None, :], np.asarray(target, dtype=np.float64)[None, :])[0]
    return np.abs(delta) @ np.abs(m.weights)


def correlation_study(
        models: typing.Sequence[model.LinearLayerModel], ds: dataset.LabeledDataset
) -> CorrelationReport:
    """
    Correlates loss sensitivity magnitudes with power-extracted column 1-norms, one model per run
    :param models: the trained models, all with the same shape
    :param ds: the dataset the sensitivities are computed on
    """
    if not models:
        raise errors.EmptyInputError("The correlation study needs at least one model")
    if len({m.weights.shape for m in models}) != 1:
        raise errors.ShapeMismatchError("All models must share a shape", *[m.weights.shape for m in models])
    if len(ds) == 0:
        raise errors.EmptyInputError("The correlation study needs a non-empty dataset")

    mean_corrs = []
    corrs_of_mean = []

    for m in models:
        profile = extract_column_norms(crossbar.CrossbarInstance.compile(m))
        per_sample_total = 0.0
        sensitivity_total = np.zeros(m.num_inputs)

        for chunk in _sensitivity_chunks(m, ds):
            per_sample_total += float(np.sum(linalg_stats.pearson_rows(chunk, profile.norms)))
            sensitivity_total += chunk.sum(axis=0)

        mean_corrs.append(per_sample_total / len(ds))
        corrs_of_mean.append(linalg_stats.pearson(sensitivity_total / len(ds), profile.norms))

    report = CorrelationReport(
        mean_correlation=float(np.mean(mean_corrs)),
        correlation_of_mean=float(np.mean(corrs_of_mean)),
        per_run_mean_correlation=tuple(mean_corrs),
        per_run_correlation_of_mean=tuple(corrs_of_mean),
    )
    log.info(
        "correlation study finished", dataset=ds.name, split=ds.split.value, runs=report.runs,
        mean_correlation=report.mean_correlation, correlation_of_mean=report.correlation_of_mean,
    )
    return report


def export_heatmap_csv(
        values: npt.ArrayLike, layout: typing.Tuple[int, int], path: typing.Union[str, pathlib.Path]
):
    """
    Writes a per-input map as a row-major grid of h rows and w columns, no header,
    every value at 17 significant digits
    :param values: the map, of length h·w
    :param layout: (h, w), e.g. (28, 28) for MNIST or (32, 32) for one CIFAR-10 channel
    :param path: the CSV file to write
    """
    values = linalg_stats.as_vector(values, "map")
    h, w = layout
    if h * w != values.size:
        raise errors.ShapeMismatchError("Map length does not fit the layout", values.shape, (h, w))

    grid = values.reshape(h, w)
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            for row in grid:
                writer.writerow(["{:.17g}".format(v) for v in row])
    except OSError as e:
        raise errors.ArtifactWriteError(path, e) from e
