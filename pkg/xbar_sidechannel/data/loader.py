"""
This module contains the class definition for the dataset loader base.
All dataset loaders extend this class

Distributions tested with children of this class:
  - MNIST IDX files (plain and gzipped)
  - CIFAR-10 binary version
"""
import abc
import gzip
import pathlib
import typing

import numpy as np
import structlog

import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors

log = structlog.get_logger()

# fixed min-max scale: byte values 0..255 map onto input voltages 0..1
PIXEL_SCALE = 255.0


class DatasetLoader(abc.ABC):
    """
    This abstract object reads one dataset distribution from a directory
    """
    name = None         # type: str
    num_classes = 10

    def __init__(self, directory: typing.Union[str, pathlib.Path]):
        """
        :param directory: the directory holding the distribution files
        """
        self.directory = pathlib.Path(directory)

    @abc.abstractmethod
    def read_split(self, split: enums.Split) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        Reads the raw pixel bytes (samples x features, uint8) and labels of one split
        :param split: the split to read
        """

    def load(self) -> typing.Tuple[dataset.LabeledDataset, dataset.LabeledDataset]:
        """
        Loads and normalizes the train and test splits
        """
        return self.load_split(enums.Split.TRAIN), self.load_split(enums.Split.TEST)

    def load_split(self, split: enums.Split) -> dataset.LabeledDataset:
        """
        Loads one split, scaling the pixel bytes into [0, 1]
        :param split: the split to load
        """
        pixels, labels = self.read_split(split)
        ds = dataset.LabeledDataset(
            inputs=pixels.astype(np.float64) / PIXEL_SCALE,
            labels=labels.astype(np.int64),
            num_classes=self.num_classes,
            split=split,
            name=self.name,
        )
        log.info("dataset loaded", name=self.name, split=split.value, rows=len(ds), features=ds.feature_dim)
        log.debug("class histogram", name=self.name, split=split.value, histogram=ds.class_histogram())
        return ds

    def read_file(self, file_name: str) -> bytes:
        """
        Returns the contents of a distribution file.
        A gzipped copy (file_name + ".gz") is used when the plain file is absent
        :param file_name: the canonical file name
        """
        path = self.directory / file_name
        if path.is_file():
            return path.read_bytes()

        gz_path = self.directory / (file_name + ".gz")
        if gz_path.is_file():
            with gzip.open(gz_path, "rb") as f:
                return f.read()

        raise errors.DatasetFormatError(path, 0, "Missing dataset file")
