"""
This module contains the loader for the MNIST handwritten digit distribution (IDX files)
"""
import struct
import typing

import numpy as np

import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.data.loader as loader
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

FILES = {
    enums.Split.TRAIN: ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    enums.Split.TEST: ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class MnistLoader(loader.DatasetLoader):
    """
    This object reads the four canonical MNIST IDX files.

    Image file layout (big endian): magic 0x00000803, item count, row count, column count,
    then one unsigned byte per pixel, row-wise.
    Label file layout (big endian): magic 0x00000801, item count, then one unsigned byte per label
    """
    name = "mnist"

    def read_split(self, split: enums.Split) -> typing.Tuple[np.ndarray, np.ndarray]:
        image_name, label_name = FILES[split]
        images = self.parse_images(image_name, self.read_file(image_name))
        labels = self.parse_labels(label_name, self.read_file(label_name))

        if images.shape[0] != labels.size:
            raise errors.DatasetFormatError(
                self.directory / label_name, 4,
                "Label count {} does not match image count {}".format(labels.size, images.shape[0])
            )
        return images, labels

    def parse_images(self, file_name: str, raw: bytes) -> np.ndarray:
        """
        Parses an IDX image file into a (count x rows*cols) uint8 matrix
        :param file_name: the file name, for error messages
        :param raw: the file contents
        """
        path = self.directory / file_name
        magic, count, rows, cols = _unpack_header(path, raw, 4)
        if magic != IMAGE_MAGIC:
            raise errors.DatasetFormatError(
                path, 0, "Bad image magic number 0x{:08x} (expected 0x{:08x})".format(magic, IMAGE_MAGIC)
            )

        payload = _payload(path, raw, 16, count * rows * cols)
        return payload.reshape(count, rows * cols)

    def parse_labels(self, file_name: str, raw: bytes) -> np.ndarray:
        """
        Parses an IDX label file into a uint8 vector
        :param file_name: the file name, for error messages
        :param raw: the file contents
        """
        path = self.directory / file_name
        magic, count = _unpack_header(path, raw, 2)
        if magic != LABEL_MAGIC:
            raise errors.DatasetFormatError(
                path, 0, "Bad label magic number 0x{:08x} (expected 0x{:08x})".format(magic, LABEL_MAGIC)
            )

        labels = _payload(path, raw, 8, count)
        if labels.size and labels.max() >= self.num_classes:
            offset = 8 + int(np.argmax(labels >= self.num_classes))
            raise errors.DatasetFormatError(path, offset, "Label {} out of range".format(labels.max()))
        return labels


def _unpack_header(path, raw: bytes, fields: int) -> typing.Tuple[int, ...]:
    size = 4 * fields
    if len(raw) < size:
        raise errors.DatasetFormatError(path, len(raw), "Truncated header ({} of {} bytes)".format(len(raw), size))
    return struct.unpack(">{}I".format(fields), raw[:size])


def _payload(path, raw: bytes, offset: int, expected: int) -> np.ndarray:
    available = len(raw) - offset
    if available < expected:
        raise errors.DatasetFormatError(
            path, len(raw), "Truncated payload ({} of {} bytes)".format(available, expected)
        )
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=offset)


def load_mnist(directory) -> typing.Tuple[dataset.LabeledDataset, dataset.LabeledDataset]:
    """
    Loads the MNIST train (60000) and test (10000) splits with pixels scaled into [0, 1]
    :param directory: the directory holding the four IDX files
    """
    return MnistLoader(directory).load()
