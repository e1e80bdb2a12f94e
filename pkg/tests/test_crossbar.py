import numpy as np
import pytest

import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
from xbar_sidechannel.crossbar import CrossbarInstance
from xbar_sidechannel.model import LinearLayerModel

TWO_BY_TWO = [[2.0, -3.0], [-1.0, 4.0]]


def compiled(weights, pairing=enums.Pairing.LINEAR_MSE, **kwargs) -> CrossbarInstance:
    return CrossbarInstance.compile(LinearLayerModel.from_pairing(weights, pairing), **kwargs)


class TestCompile:
    def test_sign_split(self):
        xbar = compiled([[2.0, -3.0]])
        assert np.array_equal(xbar.g_plus, [[2.0, 0.0]])
        assert np.array_equal(xbar.g_minus, [[0.0, 3.0]])

    def test_zero_weights(self):
        xbar = compiled(np.zeros((2, 3)))
        assert not xbar.g_plus.any() and not xbar.g_minus.any()

    def test_pair_invariants(self):
        weights = np.random.default_rng(0).normal(size=(4, 6))
        xbar = compiled(weights)
        assert np.array_equal(xbar.conductance, weights)
        assert not np.minimum(xbar.g_plus, xbar.g_minus).any()

    def test_both_devices_on_rejected(self):
        with pytest.raises(ValueError, match="zero conductance"):
            CrossbarInstance(np.ones((1, 1)), np.ones((1, 1)), enums.Activation.LINEAR)

    def test_negative_conductance_rejected(self):
        with pytest.raises(ValueError):
            CrossbarInstance(-np.ones((1, 1)), np.zeros((1, 1)), enums.Activation.LINEAR)


class TestForward:
    def test_bit_identical_to_model(self, trained_softmax, toy_dataset):
        xbar = CrossbarInstance.compile(trained_softmax)
        _, expected = trained_softmax.forward_batch(toy_dataset.inputs)
        assert np.array_equal(xbar.forward_batch(toy_dataset.inputs), expected)
        assert np.array_equal(xbar.predict(toy_dataset.inputs), trained_softmax.predict(toy_dataset.inputs))

    def test_single_matches_model(self, trained_linear, toy_dataset):
        xbar = CrossbarInstance.compile(trained_linear)
        for u in toy_dataset.inputs[:10]:
            assert np.array_equal(xbar.forward(u), trained_linear.forward(u)[1])

    def test_zero_input(self):
        assert np.allclose(compiled(TWO_BY_TWO, enums.Pairing.SOFTMAX_CE).forward([0.0, 0.0]), 0.5)

    @pytest.mark.parametrize("u", [[-0.1, 0.5], [0.5, 1.2], [np.nan, 0.0]])
    def test_unrealizable_voltage(self, u):
        with pytest.raises((errors.InputVoltageError, errors.NonFiniteError)):
            compiled(TWO_BY_TWO).forward(u)

    def test_unvalidated_batch(self):
        out = compiled(TWO_BY_TWO).forward_batch([[1.5, 0.0]], validate=False)
        assert np.array_equal(out, [[3.0, -1.5]])


class TestTotalCurrent:
    def test_two_by_two(self):
        xbar = compiled(TWO_BY_TWO)
        assert np.array_equal(xbar.column_conductance, [3.0, 7.0])
        assert xbar.total_current([1.0, 1.0]) == 10.0

    def test_zero_input(self):
        assert compiled(TWO_BY_TWO).total_current([0.0, 0.0]) == 0.0

    def test_basis_probe_reads_column_norm(self):
        xbar = compiled(TWO_BY_TWO, vdd=0.5)
        assert xbar.total_current([0.0, 0.5]) == pytest.approx(0.5 * 7.0)

    def test_depends_only_on_column_norms(self):
        a = compiled([[1.0, -2.0], [-3.0, 0.5]])
        b = compiled([[-4.0, 1.0], [0.0, -1.5]])
        for u in np.random.default_rng(1).uniform(size=(20, 2)):
            assert a.total_current(u) == b.total_current(u)

    def test_batch(self):
        xbar = compiled(TWO_BY_TWO)
        inputs = np.random.default_rng(2).uniform(size=(5, 2))
        assert np.allclose(xbar.total_current_batch(inputs), [xbar.total_current(u) for u in inputs])

    def test_noise_needs_generator(self):
        xbar = compiled(TWO_BY_TWO, noise_sigma=0.1)
        assert xbar.total_current([1.0, 1.0]) == 10.0
        noisy = xbar.total_current([1.0, 1.0], np.random.default_rng(3))
        assert noisy != 10.0
        assert noisy == xbar.total_current([1.0, 1.0], np.random.default_rng(3))


class TestOracleQuery:
    def test_label_only(self):
        record = compiled(TWO_BY_TWO).oracle_query([1.0, 0.0], enums.QueryMode.LABEL_ONLY, with_power=True)
        assert record.output is None
        assert record.label == 0
        assert record.power == 3.0

    def test_raw_output_without_power(self):
        record = compiled(TWO_BY_TWO).oracle_query([0.0, 1.0], enums.QueryMode.RAW_OUTPUT, with_power=False)
        assert np.array_equal(record.output, [-3.0, 4.0])
        assert record.power is None
        assert record.label is None


class TestEquivalence:
    @pytest.mark.parametrize("num_inputs", [16, 784])
    def test_random_models(self, num_inputs):
        rng = np.random.default_rng(num_inputs + 1)
        for index in range(100):
            pairing = list(enums.Pairing)[index % 2]
            m = LinearLayerModel.from_pairing(rng.normal(size=(10, num_inputs)), pairing)
            xbar = CrossbarInstance.compile(m)
            inputs = rng.uniform(size=(4, num_inputs))
            _, expected = m.forward_batch(inputs)
            assert np.array_equal(xbar.forward_batch(inputs), expected)
            assert np.allclose(xbar.total_current_batch(inputs), inputs @ np.abs(m.weights).sum(axis=0), rtol=1e-12)

    def test_power_is_linear_in_input(self):
        rng = np.random.default_rng(5)
        xbar = compiled(rng.normal(size=(10, 784)))
        a, b = rng.uniform(0.0, 0.5, size=(2, 784))
        assert xbar.total_current(a + b) == pytest.approx(xbar.total_current(a) + xbar.total_current(b), rel=1e-12)
        assert xbar.total_current(0.5 * a) == pytest.approx(0.5 * xbar.total_current(a), rel=1e-12)

    @pytest.mark.dataset
    @pytest.mark.parametrize("pairing", list(enums.Pairing))
    def test_mnist_test_set(self, pairing, real_mnist):
        _, test = real_mnist
        m = LinearLayerModel.initialize(10, 784, pairing, seed=3)
        _, expected = m.forward_batch(test.inputs)
        assert np.max(np.abs(CrossbarInstance.compile(m).forward_batch(test.inputs) - expected)) <= 1e-12
