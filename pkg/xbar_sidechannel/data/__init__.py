from xbar_sidechannel.data.dataset import LabeledDataset, shuffled_subset     # noqa
from xbar_sidechannel.data.loader import DatasetLoader        # noqa
from xbar_sidechannel.data.mnist import MnistLoader, load_mnist       # noqa
from xbar_sidechannel.data.cifar10 import Cifar10Loader, load_cifar10     # noqa
