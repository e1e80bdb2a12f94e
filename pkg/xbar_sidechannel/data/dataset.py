"""
This module contains the LabeledDataset container and seeded subsetting
"""
import dataclasses
import typing

import numpy as np
import numpy.typing as npt

import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors


@dataclasses.dataclass(frozen=True)
class LabeledDataset:
    """
    Image rows scaled into [0, 1] with integer class labels.

    The arrays are made read-only on construction so a dataset can be shared freely
    """
    inputs: npt.NDArray[np.float64]
    labels: npt.NDArray[np.int64]
    num_classes: int
    split: enums.Split
    name: str = ""

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)

        if inputs.ndim != 2:
            raise errors.ShapeMismatchError("Dataset inputs must be a (samples x features) matrix", inputs.shape)
        if inputs.shape[0] != labels.size:
            raise errors.ShapeMismatchError("Every sample needs exactly one label", inputs.shape, labels.shape)
        if inputs.size and (inputs.min() < 0.0 or inputs.max() > 1.0):
            raise errors.ValueRangeError("Dataset inputs", 0, 1, (float(inputs.min()), float(inputs.max())))
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise errors.ValueRangeError(
                "Dataset labels", 0, self.num_classes, (int(labels.min()), int(labels.max())), closed=False
            )

        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def feature_dim(self) -> int:
        """
        Returns the number of features per sample (784 for MNIST, 3072 for CIFAR-10)
        """
        return self.inputs.shape[1]

    def targets(self) -> npt.NDArray[np.float64]:
        """
        Returns the one-hot encoded labels as a (samples x num_classes) matrix
        """
        encoded = np.zeros((len(self), self.num_classes))
        encoded[np.arange(len(self)), self.labels] = 1.0
        return encoded

    def class_histogram(self) -> typing.List[int]:
        """
        Returns the number of samples of each class
        """
        return np.bincount(self.labels, minlength=self.num_classes).tolist()

    def take(self, indices: npt.ArrayLike) -> 'LabeledDataset':
        """
        Returns a dataset holding the selected rows, with the same metadata
        :param indices: the row indices to keep, in order
        """
        indices = np.asarray(indices, dtype=np.int64)
        return dataclasses.replace(self, inputs=self.inputs[indices], labels=self.labels[indices])


def shuffled_subset(ds: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """
    Returns n rows of the dataset chosen by a seeded shuffle.
    The shuffle uses numpy's PCG64 generator, so the same (dataset, n, seed) always gives the same subset
    :param ds: the dataset to draw from
    :param n: the number of rows to keep (0 <= n <= len(ds))
    :param seed: the shuffle seed
    """
    if n < 0 or n > len(ds):
        raise errors.SampleSizeError("Can not draw {} samples from a dataset of {}".format(n, len(ds)))

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    return ds.take(order[:n])
