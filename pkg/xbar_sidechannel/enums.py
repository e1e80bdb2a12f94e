"""
This module contains all the enums used by the library
"""
import enum

import xbar_sidechannel.errors as errors


class Activation(enum.Enum):
    """
    The activation function applied to the crossbar output currents
    """
    LINEAR = "linear"
    SOFTMAX = "softmax"


class Loss(enum.Enum):
    """
    The training loss of a single-layer network
    """
    MSE = "mse"
    CROSS_ENTROPY = "cross_entropy"


class Pairing(enum.Enum):
    """
    The supported (activation, loss) combinations.
    A linear output is always trained with MSE and a softmax output with crossentropy
    """
    LINEAR_MSE = "linear_mse"
    SOFTMAX_CE = "softmax_ce"

    @property
    def activation(self) -> Activation:
        return Activation.LINEAR if self is Pairing.LINEAR_MSE else Activation.SOFTMAX

    @property
    def loss(self) -> Loss:
        return Loss.MSE if self is Pairing.LINEAR_MSE else Loss.CROSS_ENTROPY

    @classmethod
    def of(cls, activation: Activation, loss: Loss) -> 'Pairing':
        """
        Returns the pairing for an activation and loss, or raises if the combination is not supported
        :param activation: the output activation
        :param loss: the training loss
        """
        for pairing in cls:
            if pairing.activation is activation and pairing.loss is loss:
                return pairing

        raise errors.InvalidPairingError(
            "Unsupported pairing {} + {}; use linear + mse or softmax + cross_entropy".format(
                activation.value, loss.value
            )
        )


class QueryMode(enum.Enum):
    """
    What an oracle query reveals about the crossbar output
    """
    RAW_OUTPUT = "raw_output"
    LABEL_ONLY = "label_only"


class PixelAttackStrategy(enum.Enum):
    """
    The single-pixel attack strategies.
    The value is the short legend name used in artifact files
    """
    RANDOM_PIXEL = "RP"
    PLUS_NORM = "+"
    MINUS_NORM = "-"
    RANDOM_DIRECTION_NORM = "RD"
    WORST_CASE = "Worst"

    @property
    def needs_profile(self) -> bool:
        """
        True if the strategy picks pixels from the extracted column 1-norms
        """
        return self in (
            PixelAttackStrategy.PLUS_NORM,
            PixelAttackStrategy.MINUS_NORM,
            PixelAttackStrategy.RANDOM_DIRECTION_NORM,
        )

    @property
    def file_tag(self) -> str:
        """
        A filesystem-safe name for the strategy
        """
        return self.name.lower()


class DatasetName(enum.Enum):
    """
    The supported datasets
    """
    MNIST = "mnist"
    CIFAR10 = "cifar10"


class Split(enum.Enum):
    """
    The dataset split a LabeledDataset was loaded from
    """
    TRAIN = "train"
    TEST = "test"


class ExperimentName(enum.Enum):
    """
    The experiments the command line runner can execute
    """
    TABLE1 = "table1"
    FIG3_HEATMAPS = "fig3_heatmaps"
    FIG4_SINGLE_PIXEL = "fig4_single_pixel"
    FIG5_SURROGATE = "fig5_surrogate"
    RECOVERY_CHECK = "recovery_check"
