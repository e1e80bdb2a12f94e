"""
This module contains the class definition for a single-layer neural network, ŷ = f(Wu), with no bias.

Supported pairings:
  - linear output with mean squared error loss
  - softmax output with categorical crossentropy loss
"""
import dataclasses
import math
import pathlib
import typing
import warnings

import numpy as np
import numpy.typing as npt
import structlog

import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.linalg_stats as linalg_stats

log = structlog.get_logger()

# floor inside the crossentropy logarithm
CE_EPSILON = 1e-12

# initial weights are drawn uniformly from [-INIT_SCALE, INIT_SCALE]
INIT_SCALE = 0.01

# rows per chunk when evaluating a whole dataset
EVAL_CHUNK = 2048

MODEL_FILE_TAG = "xbar-model"


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Mini-batch gradient descent hyperparameters
    """
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative, got {}".format(self.epochs))
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive, got {}".format(self.batch_size))
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ValueError("learning_rate must be finite and non-negative, got {}".format(self.learning_rate))

    @classmethod
    def for_pairing(cls, pairing: enums.Pairing, **overrides) -> 'TrainConfig':
        """
        Returns the default configuration for a pairing:
        learning rate 0.1 for softmax + crossentropy and 0.01 for linear + MSE
        :param pairing: the model pairing
        :param overrides: fields to replace
        """
        learning_rate = 0.1 if pairing is enums.Pairing.SOFTMAX_CE else 0.01
        return dataclasses.replace(cls(learning_rate=learning_rate), **overrides)


def activate(s: np.ndarray, activation: enums.Activation) -> np.ndarray:
    """
    Applies the output activation along the last axis.
    Softmax subtracts the maximum logit first so large logits can not overflow
    :param s: pre-activations, a vector or a (samples x outputs) matrix
    :param activation: the activation to apply
    """
    if activation is enums.Activation.LINEAR:
        return s

    shifted = s - np.max(s, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def minibatch_sgd(
        weights: np.ndarray, n_samples: int, cfg: TrainConfig,
        step: typing.Callable[[np.ndarray, np.ndarray], typing.Tuple[float, np.ndarray]]
) -> np.ndarray:
    """
    Runs plain mini-batch gradient descent and returns the final weights.
    Each epoch visits the samples in a fresh seeded permutation
    :param weights: the starting weights (not modified)
    :param n_samples: the number of training samples
    :param cfg: the hyperparameters
    :param step: called with (weights, batch indices), returns the batch loss and its gradient

    :raises TrainingDivergedError: if a batch loss is NaN or Inf
    """
    rng = np.random.default_rng(cfg.seed)
    w = np.array(weights, dtype=np.float64)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        epoch_loss = 0.0

        for batch, start in enumerate(range(0, n_samples, cfg.batch_size)):
            indices = order[start:start + cfg.batch_size]
            loss, grad = step(w, indices)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise errors.TrainingDivergedError(epoch, batch, loss)

            w -= cfg.learning_rate * grad
            epoch_loss += loss * indices.size

        log.debug("epoch finished", epoch=epoch, loss=epoch_loss / max(n_samples, 1))

    if not np.all(np.isfinite(w)):
        raise errors.TrainingDivergedError(cfg.epochs, 0, math.nan)
    return w


@dataclasses.dataclass(frozen=True)
class LinearLayerModel:
    """
    This object represents a single-layer network with an (outputs x inputs) weight matrix.

    Models are immutable: training returns a new model
    """
    weights: npt.NDArray[np.float64]
    activation: enums.Activation
    loss_kind: enums.Loss

    def __post_init__(self):
        weights = np.array(linalg_stats.as_matrix(self.weights, "weight matrix"))
        enums.Pairing.of(self.activation, self.loss_kind)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_pairing(cls, weights: npt.ArrayLike, pairing: enums.Pairing) -> 'LinearLayerModel':
        """
        Builds a model from a weight matrix and a pairing
        :param weights: the (outputs x inputs) weight matrix
        :param pairing: the activation/loss pairing
        """
        return cls(np.asarray(weights, dtype=np.float64), pairing.activation, pairing.loss)

    @classmethod
    def initialize(cls, num_outputs: int, num_inputs: int, pairing: enums.Pairing, seed: int) -> 'LinearLayerModel':
        """
        Builds a model with weights drawn uniformly from [-0.01, 0.01]
        :param num_outputs: M, the number of classes
        :param num_inputs: N, the number of input features
        :param pairing: the activation/loss pairing
        :param seed: the initialization seed
        """
        rng = np.random.default_rng(seed)
        weights = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(num_outputs, num_inputs))
        return cls.from_pairing(weights, pairing)

    @property
    def pairing(self) -> enums.Pairing:
        return enums.Pairing.of(self.activation, self.loss_kind)

    @property
    def num_outputs(self) -> int:
        return self.weights.shape[0]

    @property
    def num_inputs(self) -> int:
        return self.weights.shape[1]

    def with_weights(self, weights: npt.ArrayLike) -> 'LinearLayerModel':
        """
        Returns a model with the same pairing and new weights
        """
        return dataclasses.replace(self, weights=np.asarray(weights, dtype=np.float64))

    def forward(self, u: npt.ArrayLike) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        Returns the pre-activation s = Wu and the output ŷ = f(s)
        :param u: an input vector of length N
        """
        u = linalg_stats.as_vector(u, "input")
        if u.size != self.num_inputs:
            raise errors.ShapeMismatchError("Input does not match the weight matrix", u.shape, self.weights.shape)

        s = self.weights @ u
        return s, activate(s, self.activation)

    def forward_batch(self, inputs: npt.ArrayLike) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        Row-wise forward pass: returns S = U Wᵀ and Ŷ = f(S)
        :param inputs: a (samples x N) matrix
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.num_inputs:
            raise errors.ShapeMismatchError("Inputs do not match the weight matrix", inputs.shape, self.weights.shape)

        s = inputs @ self.weights.T
        return s, activate(s, self.activation)

    def loss(self, y_hat: npt.ArrayLike, target: npt.ArrayLike) -> float:
        """
        Returns the loss of one output against a one-hot target.
        MSE = (1/M) Σ (ŷ_i - y_i)²; crossentropy = -Σ y_i ln(ŷ_i + 1e-12)
        :param y_hat: the model output
        :param target: the one-hot target
        """
        y_hat = np.asarray(y_hat, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        if y_hat.shape != target.shape:
            raise errors.ShapeMismatchError("Output and target lengths differ", y_hat.shape, target.shape)
        return float(np.mean(self.loss_batch(y_hat[None, :], target[None, :])))

    def loss_batch(self, y_hat: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """
        Returns the per-sample losses of a batch of outputs
        """
        if self.loss_kind is enums.Loss.MSE:
            return np.mean((y_hat - targets) ** 2, axis=1)
        return -np.sum(targets * np.log(y_hat + CE_EPSILON), axis=1)

    def output_gradient(self, y_hat: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """
        Returns ∂L/∂s for a batch, taken through the full activation Jacobian:
        (2/M)(ŷ - y) for linear + MSE, (ŷ - y) for softmax + crossentropy
        """
        if self.loss_kind is enums.Loss.MSE:
            return (2.0 / self.num_outputs) * (y_hat - targets)
        return y_hat - targets

    def input_sensitivity(self, u: npt.ArrayLike, target: npt.ArrayLike) -> np.ndarray:
        """
        Returns the gradient of the loss with respect to the input, ∂L/∂u = Wᵀ ∂L/∂s
        :param u: the input vector
        :param target: the one-hot target
        """
        u = linalg_stats.as_vector(u, "input")
        target = linalg_stats.as_vector(target, "target")
        return self.input_sensitivity_batch(u[None, :], target[None, :])[0]

    def input_sensitivity_batch(self, inputs: npt.ArrayLike, targets: npt.ArrayLike) -> np.ndarray:
        """
        Row-wise input_sensitivity for a (samples x N) input matrix and (samples x M) targets
        """
        targets = np.asarray(targets, dtype=np.float64)
        _, y_hat = self.forward_batch(inputs)
        if targets.shape != y_hat.shape:
            raise errors.ShapeMismatchError("Targets do not match the model outputs", targets.shape, y_hat.shape)
        return self.output_gradient(y_hat, targets) @ self.weights

    def fgsm_perturbation(
            self, u: npt.ArrayLike, target: npt.ArrayLike, epsilon: float, clip: bool = True
    ) -> np.ndarray:
        """
        Returns the FGSM adversarial input u + ε·sgn(∂L/∂u), with sgn(0) = 0
        :param u: the clean input
        :param target: the one-hot target
        :param epsilon: the attack strength, >= 0
        :param clip: clip the adversarial input to [0, 1] so it stays a valid crossbar voltage
        """
        u = linalg_stats.as_vector(u, "input")
        target = linalg_stats.as_vector(target, "target")
        return self.fgsm_batch(u[None, :], target[None, :], epsilon, clip)[0]

    def fgsm_batch(
            self, inputs: npt.ArrayLike, targets: npt.ArrayLike, epsilon: float, clip: bool = True
    ) -> np.ndarray:
        """
        Row-wise fgsm_perturbation
        """
        if epsilon < 0:
            raise ValueError("The attack strength must be non-negative, got {}".format(epsilon))

        inputs = np.asarray(inputs, dtype=np.float64)
        adversarial = inputs + epsilon * np.sign(self.input_sensitivity_batch(inputs, targets))
        if clip:
            adversarial = np.clip(adversarial, 0.0, 1.0)
        return adversarial

    def predict(self, inputs: npt.ArrayLike) -> np.ndarray:
        """
        Returns the predicted label of every row (argmax, ties to the lowest index)
        """
        _, y_hat = self.forward_batch(inputs)
        return linalg_stats.argmax_rows(y_hat)

    def accuracy(self, ds: dataset.LabeledDataset) -> float:
        """
        Returns the fraction of correctly classified samples.
        An empty dataset has accuracy 0.0 and raises a warning
        :param ds: the dataset to evaluate on
        """
        if len(ds) == 0:
            warnings.warn("Accuracy of an empty dataset is defined as 0.0")
            return 0.0

        correct = 0
        for start in range(0, len(ds), EVAL_CHUNK):
            stop = start + EVAL_CHUNK
            correct += int(np.sum(self.predict(ds.inputs[start:stop]) == ds.labels[start:stop]))
        return correct / len(ds)

    def train(self, ds: dataset.LabeledDataset, cfg: TrainConfig) -> 'LinearLayerModel':
        """
        Trains a copy of this model by mini-batch gradient descent on one-hot targets.
        The result depends only on the starting weights, the dataset and cfg
        :param ds: the training set (feature_dim == N, num_classes == M)
        :param cfg: the hyperparameters
        """
        if ds.feature_dim != self.num_inputs or ds.num_classes != self.num_outputs:
            raise errors.ShapeMismatchError(
                "Dataset does not match the model", (len(ds), ds.feature_dim, ds.num_classes), self.weights.shape
            )

        inputs = ds.inputs
        targets = ds.targets()

        def step(w: np.ndarray, indices: np.ndarray) -> typing.Tuple[float, np.ndarray]:
            batch_inputs = inputs[indices]
            y_hat = activate(batch_inputs @ w.T, self.activation)
            loss = float(np.mean(self.loss_batch(y_hat, targets[indices])))
            grad = self.output_gradient(y_hat, targets[indices]).T @ batch_inputs / indices.size
            return loss, grad

        weights = minibatch_sgd(self.weights, len(ds), cfg, step)
        trained = self.with_weights(weights)
        log.info(
            "model trained", pairing=self.pairing.value, epochs=cfg.epochs, seed=cfg.seed, samples=len(ds)
        )
        return trained

    def save(self, path: typing.Union[str, pathlib.Path]):
        """
        Writes the model as text: a header line "# xbar-model M N activation loss"
        followed by M rows of N weights at 17 significant digits
        :param path: the file to write
        """
        header = "{} {} {} {} {}".format(
            MODEL_FILE_TAG, self.num_outputs, self.num_inputs, self.activation.value, self.loss_kind.value
        )
        try:
            np.savetxt(path, self.weights, fmt="%.17g", header=header, comments="# ")
        except OSError as e:
            raise errors.ArtifactWriteError(path, e) from e

    @classmethod
    def load(cls, path: typing.Union[str, pathlib.Path]) -> 'LinearLayerModel':
        """
        Reads a model written by save
        :param path: the file to read
        """
        path = pathlib.Path(path)
        with path.open("r") as f:
            header = f.readline().lstrip("#").split()

        if len(header) != 5 or header[0] != MODEL_FILE_TAG:
            raise errors.DatasetFormatError(path, 0, "Not a model file")

        rows, cols = int(header[1]), int(header[2])
        weights = np.loadtxt(path, comments="#", ndmin=2).reshape(rows, cols)
        return cls(weights, enums.Activation(header[3]), enums.Loss(header[4]))
