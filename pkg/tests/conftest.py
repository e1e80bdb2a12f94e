import os
import pathlib
import struct

import numpy as np
import pytest
import yaml

import xbar_sidechannel.data.mnist as mnist
import xbar_sidechannel.enums as enums
from xbar_sidechannel.data import load_mnist
from xbar_sidechannel.data.dataset import LabeledDataset
from xbar_sidechannel.model import LinearLayerModel, TrainConfig

IMAGE_SIDE = 28
NUM_CLASSES = 10


def idx_images(images: np.ndarray, magic: int = mnist.IMAGE_MAGIC) -> bytes:
    count, rows, cols = images.shape
    return struct.pack(">4I", magic, count, rows, cols) + images.astype(np.uint8).tobytes()


def idx_labels(labels: np.ndarray, magic: int = mnist.LABEL_MAGIC) -> bytes:
    return struct.pack(">2I", magic, labels.size) + labels.astype(np.uint8).tobytes()


def cifar_records(pixels: np.ndarray, labels: np.ndarray) -> bytes:
    records = np.hstack([labels.astype(np.uint8)[:, None], pixels.astype(np.uint8)])
    return records.tobytes()


def class_images(n: int, seed: int, side: int = IMAGE_SIDE) -> tuple:
    """
    Images whose class lights up its own horizontal band, with a dark border like MNIST digits
    """
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % NUM_CLASSES
    images = rng.integers(0, 40, size=(n, side, side))
    band = (side - 8) // NUM_CLASSES
    for i, label in enumerate(labels):
        top = 4 + label * band
        images[i, top:top + band, 4:side - 4] = rng.integers(180, 256, size=(band, side - 8))
    images[:, :2, :] = 0
    images[:, -2:, :] = 0
    images[:, :, :2] = 0
    images[:, :, -2:] = 0
    return images.astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture
def mnist_dir(tmp_path: pathlib.Path) -> pathlib.Path:
    """
    A directory with small but well-formed MNIST IDX files (200 train, 60 test images)
    """
    directory = tmp_path / "mnist"
    directory.mkdir()
    for split, n, seed in ((enums.Split.TRAIN, 200, 1), (enums.Split.TEST, 60, 2)):
        images, labels = class_images(n, seed)
        image_name, label_name = mnist.FILES[split]
        (directory / image_name).write_bytes(idx_images(images))
        (directory / label_name).write_bytes(idx_labels(labels))
    return directory


@pytest.fixture
def cifar_dir(tmp_path: pathlib.Path) -> pathlib.Path:
    """
    A directory with six CIFAR-10 batch files of 20 records each
    """
    directory = tmp_path / "cifar-10-batches-bin"
    directory.mkdir()
    rng = np.random.default_rng(3)
    names = ["data_batch_{}.bin".format(i) for i in range(1, 6)] + ["test_batch.bin"]
    for name in names:
        pixels = rng.integers(0, 256, size=(20, 3072))
        labels = rng.integers(0, NUM_CLASSES, size=20)
        (directory / name).write_bytes(cifar_records(pixels, labels))
    return directory


@pytest.fixture
def toy_dataset() -> LabeledDataset:
    """
    90 linearly separable samples with 12 features and 3 classes
    """
    rng = np.random.default_rng(11)
    labels = np.arange(90) % 3
    inputs = rng.uniform(0.0, 0.2, size=(90, 12))
    for i, label in enumerate(labels):
        inputs[i, 4 * label:4 * label + 4] += 0.7
    return LabeledDataset(inputs, labels, 3, enums.Split.TRAIN, "toy")


@pytest.fixture
def trained_softmax(toy_dataset: LabeledDataset) -> LinearLayerModel:
    initial = LinearLayerModel.initialize(3, 12, enums.Pairing.SOFTMAX_CE, seed=5)
    return initial.train(toy_dataset, TrainConfig(epochs=30, batch_size=10, learning_rate=0.5, seed=5))


@pytest.fixture
def trained_linear(toy_dataset: LabeledDataset) -> LinearLayerModel:
    initial = LinearLayerModel.initialize(3, 12, enums.Pairing.LINEAR_MSE, seed=5)
    return initial.train(toy_dataset, TrainConfig(epochs=60, batch_size=10, learning_rate=0.5, seed=5))


@pytest.fixture
def write_config(tmp_path: pathlib.Path, mnist_dir: pathlib.Path):
    """
    Returns a function writing an experiment YAML file that points at the synthetic MNIST files
    and uses short training
    """
    def write(name: str = "config.yaml", **fields) -> pathlib.Path:
        document = {
            "dataset": "mnist",
            "data_dir": str(mnist_dir),
            "output_dir": str(tmp_path / "out"),
            "train": {"epochs": 3, "batch_size": 32},
        }
        document.update(fields)
        path = tmp_path / name
        path.write_text(yaml.safe_dump(document), encoding="utf-8")
        return path

    return write


@pytest.fixture
def real_data_dir() -> pathlib.Path:
    """
    The directory holding the real datasets, from the XBAR_DATA_DIR environment variable
    """
    value = os.environ.get("XBAR_DATA_DIR")
    if not value:
        pytest.skip("XBAR_DATA_DIR is not set")
    return pathlib.Path(value)


@pytest.fixture(scope="session")
def real_mnist() -> tuple:
    """
    The real MNIST (train, test) splits, read once per session from XBAR_DATA_DIR
    """
    value = os.environ.get("XBAR_DATA_DIR")
    if not value:
        pytest.skip("XBAR_DATA_DIR is not set")
    return load_mnist(pathlib.Path(value) / "mnist")


def train_oracle(train: LabeledDataset, pairing: enums.Pairing, seed: int) -> LinearLayerModel:
    """
    Trains a 10 x feature_dim model with the pairing's default hyperparameters
    """
    initial = LinearLayerModel.initialize(NUM_CLASSES, train.feature_dim, pairing, seed=seed)
    return initial.train(train, TrainConfig.for_pairing(pairing, seed=seed))
