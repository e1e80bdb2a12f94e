"""
This module contains the loader for the CIFAR-10 binary distribution
"""
import typing

import numpy as np

import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.data.loader as loader
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors

RECORD_SIZE = 3073
CHANNEL_SIZE = 1024

FILES = {
    enums.Split.TRAIN: tuple("data_batch_{}.bin".format(i) for i in range(1, 6)),
    enums.Split.TEST: ("test_batch.bin",),
}


class Cifar10Loader(loader.DatasetLoader):
    """
    This object reads the six CIFAR-10 binary batch files.

    Every record is 3073 bytes: one label byte followed by 3072 pixel bytes,
    stored channel-planar (1024 red, then 1024 green, then 1024 blue, each row-major 32x32).
    The planar layout is kept, so features 0..1023 are the red channel
    """
    name = "cifar10"

    def read_split(self, split: enums.Split) -> typing.Tuple[np.ndarray, np.ndarray]:
        blocks = [self.parse_batch(file_name, self.read_file(file_name)) for file_name in FILES[split]]
        pixels = np.concatenate([pixels for pixels, _ in blocks])
        labels = np.concatenate([labels for _, labels in blocks])
        return pixels, labels

    def parse_batch(self, file_name: str, raw: bytes) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        Parses one batch file into (records x 3072) pixel bytes and a label vector
        :param file_name: the file name, for error messages
        :param raw: the file contents
        """
        path = self.directory / file_name
        if len(raw) == 0 or len(raw) % RECORD_SIZE:
            raise errors.DatasetFormatError(
                path, len(raw) - len(raw) % RECORD_SIZE,
                "File size {} is not a whole number of {}-byte records".format(len(raw), RECORD_SIZE)
            )

        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_SIZE)
        labels = records[:, 0]
        if labels.max() >= self.num_classes:
            bad = int(np.argmax(labels >= self.num_classes))
            raise errors.DatasetFormatError(path, bad * RECORD_SIZE, "Label {} out of range".format(labels[bad]))
        return records[:, 1:], labels


def first_channel(features: np.ndarray) -> np.ndarray:
    """
    Returns the red-channel slice (features 0..1023) of CIFAR-10 feature vectors
    """
    return features[..., :CHANNEL_SIZE]


def load_cifar10(directory) -> typing.Tuple[dataset.LabeledDataset, dataset.LabeledDataset]:
    """
    Loads the CIFAR-10 train (50000) and test (10000) splits at full 3072 features, scaled into [0, 1]
    :param directory: the directory holding the six batch files
    """
    return Cifar10Loader(directory).load()
