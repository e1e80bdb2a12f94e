"""
This module contains the exceptions raised by the library.
Every exception extends XbarError and carries the exit code the command line uses for its category
"""
import typing


class XbarError(Exception):
    """
    Base class for all errors raised by the library
    """
    exit_code = 1


class ShapeMismatchError(XbarError, ValueError):
    """
    Raised when the shapes of two operands do not conform
    """
    exit_code = 4

    def __init__(self, message: str, *shapes: typing.Tuple[int, ...]):
        """
        :param message: what was being attempted
        :param shapes: the offending shapes, reported in the message
        """
        if shapes:
            message = "{} (shapes: {})".format(message, ", ".join(str(tuple(s)) for s in shapes))
        super().__init__(message)
        self.shapes = shapes


class EmptyInputError(XbarError, ValueError):
    """
    Raised when an operation needs at least one element and got none
    """
    exit_code = 4


class NonFiniteError(XbarError, ArithmeticError):
    """
    Raised when NaN or Inf values appear in weights, inputs or results
    """
    exit_code = 4


class InvalidPairingError(XbarError, ValueError):
    """
    Raised for an activation/loss combination other than linear + MSE or softmax + crossentropy
    """
    exit_code = 2


class TrainingDivergedError(NonFiniteError):
    """
    Raised when the training loss becomes non-finite
    """

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(
            "Training diverged at epoch {}, batch {} (loss = {}); lower the learning rate".format(
                epoch, batch, loss
            )
        )
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class DatasetFormatError(XbarError):
    """
    Raised when a dataset file is missing, truncated or malformed
    """
    exit_code = 3

    def __init__(self, path: typing.Any, offset: int, reason: str):
        """
        :param path: the offending file
        :param offset: the byte offset the problem was detected at
        :param reason: a description of the problem
        """
        super().__init__("{} (file '{}', offset {})".format(reason, path, offset))
        self.path = path
        self.offset = offset
        self.reason = reason


class InputVoltageError(XbarError, ValueError):
    """
    Raised when a crossbar input is outside the physically realizable range [0, vdd]
    """
    exit_code = 4


class MissingAttackInputError(XbarError, ValueError):
    """
    Raised when an attack strategy is missing the information it is built on
    """
    exit_code = 2


class QueryModeError(XbarError, ValueError):
    """
    Raised when a query record lacks the field an operation needs
    """
    exit_code = 2


class ConfigError(XbarError, ValueError):
    """
    Raised for an invalid experiment configuration
    """
    exit_code = 2

    def __init__(self, field: str, reason: str, line: typing.Optional[int] = None):
        """
        :param field: the dotted path of the offending field
        :param reason: what is wrong with it
        :param line: the line of the configuration file, when known
        """
        where = "line {}: ".format(line) if line is not None else ""
        super().__init__("{}{}: {}".format(where, field, reason))
        self.field = field
        self.reason = reason
        self.line = line


class ArtifactWriteError(XbarError, OSError):
    """
    Raised when an output artifact can not be written
    """
    exit_code = 5

    def __init__(self, path: typing.Any, cause: Exception):
        super().__init__("Could not write '{}': {}".format(path, cause))
        self.path = path


class SampleSizeError(XbarError, ValueError):
    """
    Raised when more samples are requested than a dataset holds
    """
    exit_code = 2


class ValueRangeError(XbarError, ValueError):
    """
    Raised when values fall outside the range a quantity is defined on
    """
    exit_code = 4

    def __init__(self, name: str, low: float, high: float, found: typing.Tuple[float, float], closed: bool = True):
        """
        :param name: what the values are
        :param low: the smallest allowed value
        :param high: the upper bound
        :param found: the smallest and largest values seen
        :param closed: whether high itself is allowed
        """
        bracket = "]" if closed else ")"
        super().__init__("{} must lie in [{}, {}{} (found {} to {})".format(name, low, high, bracket, *found))
        self.name = name
        self.low = low
        self.high = high
        self.found = found
