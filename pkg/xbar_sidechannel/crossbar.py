"""
This module contains the class definition for an ideal NVM crossbar implementing one network layer

Every weight is stored as a differential conductance pair, w_ij = G⁺_ij - G⁻_ij, with the unused
device of each pair at zero conductance. Voltages, currents and conductances are normalized, so the
conductances equal the weights and the supply voltage is 1.0 by default.
Ohmic devices only: no sneak paths, wire resistance or device variability
"""
import dataclasses
import typing

import numpy as np
import numpy.typing as npt
import structlog

import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.linalg_stats as linalg_stats
import xbar_sidechannel.model as model

log = structlog.get_logger()


@dataclasses.dataclass(frozen=True)
class QueryRecord:
    """
    What an attacker observes for one query: the input, then either the raw output or the label,
    and optionally the total supply current. activation is the output activation of the answering crossbar
    """
    input: np.ndarray
    mode: enums.QueryMode
    activation: typing.Optional[enums.Activation] = None
    output: typing.Optional[np.ndarray] = None
    label: typing.Optional[int] = None
    power: typing.Optional[float] = None


@dataclasses.dataclass(frozen=True)
class CrossbarInstance:
    """
    This object represents a programmed crossbar.

    Please use CrossbarInstance.compile to build one from a trained model
    """
    g_plus: npt.NDArray[np.float64]
    g_minus: npt.NDArray[np.float64]
    activation: enums.Activation
    vdd: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        g_plus = np.array(linalg_stats.as_matrix(self.g_plus, "G+ matrix"))
        g_minus = np.array(linalg_stats.as_matrix(self.g_minus, "G- matrix"))

        if g_plus.shape != g_minus.shape:
            raise errors.ShapeMismatchError("Conductance pair matrices differ in shape", g_plus.shape, g_minus.shape)
        if np.any(g_plus < 0) or np.any(g_minus < 0):
            raise ValueError("Conductances must be non-negative")
        if np.any(np.minimum(g_plus, g_minus) != 0):
            raise ValueError("One device of every conductance pair must be at zero conductance")
        if not self.vdd > 0:
            raise ValueError("The supply voltage must be positive, got {}".format(self.vdd))
        if self.noise_sigma < 0:
            raise ValueError("The measurement noise must be non-negative, got {}".format(self.noise_sigma))

        g_plus.setflags(write=False)
        g_minus.setflags(write=False)
        object.__setattr__(self, "g_plus", g_plus)
        object.__setattr__(self, "g_minus", g_minus)

    @classmethod
    def compile(
            cls, source: model.LinearLayerModel, vdd: float = 1.0, noise_sigma: float = 0.0
    ) -> 'CrossbarInstance':
        """
        Programs a crossbar with a model's weights.
        Positive weights go to G⁺ and negative weights to G⁻, so G⁺ + G⁻ = |W|,
        the smallest total conductance (and so the lowest power) any realization of W can have
        :param source: the trained model
        :param vdd: the normalized supply voltage
        :param noise_sigma: standard deviation of the Gaussian noise added to power readings (0 = ideal)
        """
        weights = linalg_stats.as_matrix(source.weights, "weight matrix")
        g_plus = np.where(weights > 0, weights, 0.0)
        g_minus = np.where(weights < 0, -weights, 0.0)

        log.debug("crossbar compiled", outputs=weights.shape[0], inputs=weights.shape[1], vdd=vdd)
        return cls(g_plus, g_minus, source.activation, vdd=vdd, noise_sigma=noise_sigma)

    @property
    def num_inputs(self) -> int:
        return self.g_plus.shape[1]

    @property
    def num_outputs(self) -> int:
        return self.g_plus.shape[0]

    @property
    def conductance(self) -> np.ndarray:
        """
        Returns the effective signed conductance matrix G = G⁺ - G⁻
        """
        return self.g_plus - self.g_minus

    @property
    def column_conductance(self) -> np.ndarray:
        """
        Returns G_j, the total conductance connected to each input line
        """
        return np.sum(self.g_plus + self.g_minus, axis=0)

    def check_inputs(self, inputs: np.ndarray):
        """
        Checks that inputs are voltages the crossbar can be driven with
        :param inputs: a vector of length N or a (samples x N) matrix

        :raises InputVoltageError: if an entry is outside [0, vdd]
        """
        if inputs.shape[-1] != self.num_inputs:
            raise errors.ShapeMismatchError("Input does not match the crossbar", inputs.shape, self.g_plus.shape)
        if not np.all(np.isfinite(inputs)):
            raise errors.NonFiniteError("Input voltages contain NaN or Inf values")
        if inputs.size and (inputs.min() < 0.0 or inputs.max() > self.vdd):
            raise errors.InputVoltageError(
                "Input voltages must lie in [0, {}], got [{}, {}]".format(self.vdd, inputs.min(), inputs.max())
            )

    def forward(self, u: npt.ArrayLike) -> np.ndarray:
        """
        Returns the layer output f(G u)
        :param u: an input voltage vector of length N
        """
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 1:
            raise errors.ShapeMismatchError("Expected a 1-D input", u.shape)
        self.check_inputs(u)
        return model.activate(self.conductance @ u, self.activation)

    def forward_batch(self, inputs: npt.ArrayLike, validate: bool = True) -> np.ndarray:
        """
        Row-wise forward for a (samples x N) input matrix
        :param inputs: the input voltages
        :param validate: check the voltage range; disable only to compare against unclipped inputs
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2:
            raise errors.ShapeMismatchError("Expected a 2-D input matrix", inputs.shape)
        if validate:
            self.check_inputs(inputs)
        elif inputs.shape[1] != self.num_inputs:
            raise errors.ShapeMismatchError("Input does not match the crossbar", inputs.shape, self.g_plus.shape)
        return model.activate(inputs @ self.conductance.T, self.activation)

    def predict(self, inputs: npt.ArrayLike, validate: bool = True) -> np.ndarray:
        """
        Returns the output label of every row (argmax, ties to the lowest index)
        """
        return linalg_stats.argmax_rows(self.forward_batch(inputs, validate))

    def total_current(self, u: npt.ArrayLike, rng: typing.Optional[np.random.Generator] = None) -> float:
        """
        Returns the total steady state supply current i_total = Σ_j u_j G_j.
        If noise_sigma > 0 and a generator is given, Gaussian measurement noise is added
        :param u: an input voltage vector of length N
        :param rng: the noise source
        """
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 1:
            raise errors.ShapeMismatchError("Expected a 1-D input", u.shape)
        self.check_inputs(u)

        current = float(u @ self.column_conductance)
        if self.noise_sigma > 0 and rng is not None:
            current += float(rng.normal(0.0, self.noise_sigma))
        return current

    def total_current_batch(self, inputs: npt.ArrayLike) -> np.ndarray:
        """
        Row-wise noise-free total_current
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        self.check_inputs(inputs)
        return inputs @ self.column_conductance

    def oracle_query(
            self, u: npt.ArrayLike, mode: enums.QueryMode, with_power: bool,
            rng: typing.Optional[np.random.Generator] = None
    ) -> QueryRecord:
        """
        Answers one attacker query
        :param u: the input voltage vector
        :param mode: RAW_OUTPUT reveals ŷ, LABEL_ONLY reveals only argmax ŷ
        :param with_power: also reveal the total supply current
        :param rng: the measurement noise source, see total_current
        """
        u = np.array(u, dtype=np.float64)
        y_hat = self.forward(u)
        power = self.total_current(u, rng) if with_power else None
        u.setflags(write=False)

        if mode is enums.QueryMode.RAW_OUTPUT:
            return QueryRecord(input=u, mode=mode, activation=self.activation, output=y_hat, power=power)
        return QueryRecord(
            input=u, mode=mode, activation=self.activation, label=linalg_stats.argmax_tiebreak_low(y_hat), power=power,
        )
