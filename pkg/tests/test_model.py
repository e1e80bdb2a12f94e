import math

import numpy as np
import pytest

import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
from xbar_sidechannel.data import LabeledDataset, load_mnist
from xbar_sidechannel.model import LinearLayerModel, TrainConfig, activate


def softmax_model(weights) -> LinearLayerModel:
    return LinearLayerModel.from_pairing(weights, enums.Pairing.SOFTMAX_CE)


def linear_model(weights) -> LinearLayerModel:
    return LinearLayerModel.from_pairing(weights, enums.Pairing.LINEAR_MSE)


class TestPairing:
    def test_invalid_pairing(self):
        with pytest.raises(errors.InvalidPairingError):
            LinearLayerModel(np.zeros((2, 2)), enums.Activation.LINEAR, enums.Loss.CROSS_ENTROPY)

    def test_pairing_roundtrip(self):
        for pairing in enums.Pairing:
            assert enums.Pairing.of(pairing.activation, pairing.loss) is pairing

    def test_weights_read_only(self):
        m = linear_model(np.ones((2, 2)))
        with pytest.raises(ValueError):
            m.weights[0, 0] = 3.0


class TestForward:
    def test_zero_weights(self):
        s, y_hat = softmax_model(np.zeros((4, 3))).forward([0.2, 0.5, 0.9])
        assert not s.any()
        assert np.allclose(y_hat, 0.25)

    def test_linear_identity(self):
        u = np.array([0.1, 0.7, 0.3])
        _, y_hat = linear_model(np.eye(3)).forward(u)
        assert np.array_equal(y_hat, u)

    def test_softmax_closed_form(self):
        assert np.allclose(activate(np.array([0.0, math.log(3.0)]), enums.Activation.SOFTMAX), [0.25, 0.75])

    def test_softmax_large_logits(self):
        y_hat = activate(np.array([1000.0, 0.0]), enums.Activation.SOFTMAX)
        assert np.all(np.isfinite(y_hat))
        assert y_hat[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_softmax_is_a_distribution(self, seed):
        s = np.random.default_rng(seed).normal(scale=5.0, size=(8, 10))
        y_hat = activate(s, enums.Activation.SOFTMAX)
        assert np.all((y_hat > 0.0) & (y_hat < 1.0))
        assert np.allclose(y_hat.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        assert np.allclose(activate(s + 7.5, enums.Activation.SOFTMAX), y_hat, rtol=0, atol=1e-12)

    def test_batch_matches_single(self, trained_softmax, toy_dataset):
        _, batch = trained_softmax.forward_batch(toy_dataset.inputs[:5])
        for row, u in zip(batch, toy_dataset.inputs[:5]):
            assert np.allclose(row, trained_softmax.forward(u)[1])

    def test_shape_mismatch(self):
        with pytest.raises(errors.ShapeMismatchError):
            linear_model(np.eye(3)).forward([1.0, 2.0])


class TestLoss:
    def test_perfect_prediction(self):
        assert linear_model(np.eye(2)).loss([0.0, 1.0], [0.0, 1.0]) == 0.0

    def test_mse_formula(self):
        assert linear_model(np.eye(2)).loss([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)

    def test_uniform_cross_entropy(self):
        target = np.eye(10)[3]
        assert softmax_model(np.zeros((10, 2))).loss(np.full(10, 0.1), target) == pytest.approx(math.log(10), abs=1e-9)


class TestSensitivity:
    def test_zero_weights_softmax(self):
        grad = softmax_model(np.zeros((3, 4))).input_sensitivity([0.1, 0.2, 0.3, 0.4], np.eye(3)[1])
        assert not grad.any()

    @pytest.mark.parametrize("pairing", list(enums.Pairing))
    def test_zero_residual(self, pairing):
        m = LinearLayerModel.from_pairing(np.eye(2), pairing)
        u = np.array([0.0, 1.0])
        _, y_hat = m.forward(u)
        assert not m.input_sensitivity(u, y_hat).any()

    @pytest.mark.parametrize("pairing", list(enums.Pairing))
    def test_matches_finite_differences(self, pairing):
        rng = np.random.default_rng(0)
        m = LinearLayerModel.from_pairing(rng.normal(size=(3, 5)), pairing)
        u = rng.uniform(0.2, 0.8, size=5)
        target = np.eye(3)[2]
        grad = m.input_sensitivity(u, target)

        h = 1e-6
        for j in range(5):
            step = np.eye(5)[j] * h
            numeric = (m.loss(m.forward(u + step)[1], target) - m.loss(m.forward(u - step)[1], target)) / (2 * h)
            assert grad[j] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


class TestFgsm:
    def test_zero_strength(self, trained_softmax, toy_dataset):
        u = toy_dataset.inputs[0]
        assert np.array_equal(trained_softmax.fgsm_perturbation(u, toy_dataset.targets()[0], 0.0), u)

    def test_zero_gradient(self):
        u = np.array([0.3, 0.6])
        m = linear_model(np.eye(2))
        assert np.array_equal(m.fgsm_perturbation(u, u, 0.2), u)

    def test_step_is_epsilon(self, trained_softmax, toy_dataset):
        u = toy_dataset.inputs[0]
        adversarial = trained_softmax.fgsm_perturbation(u, toy_dataset.targets()[0], 0.05, clip=False)
        assert np.allclose(np.abs(adversarial - u), 0.05)

    @pytest.mark.parametrize("clip", [True, False])
    @pytest.mark.parametrize("epsilon", [0.0, 0.1, 0.6])
    def test_step_never_exceeds_epsilon(self, clip, epsilon, trained_softmax, toy_dataset):
        adversarial = trained_softmax.fgsm_batch(toy_dataset.inputs, toy_dataset.targets(), epsilon, clip=clip)
        assert np.max(np.abs(adversarial - toy_dataset.inputs)) <= epsilon + 1e-15

    def test_clipped(self, trained_softmax, toy_dataset):
        adversarial = trained_softmax.fgsm_batch(toy_dataset.inputs, toy_dataset.targets(), 0.9)
        assert adversarial.min() >= 0.0 and adversarial.max() <= 1.0

    def test_lowers_accuracy(self, trained_softmax, toy_dataset):
        adversarial = trained_softmax.fgsm_batch(toy_dataset.inputs, toy_dataset.targets(), 0.5)
        attacked = np.mean(trained_softmax.predict(adversarial) == toy_dataset.labels)
        assert attacked < trained_softmax.accuracy(toy_dataset)

    def test_negative_strength(self, trained_softmax, toy_dataset):
        with pytest.raises(ValueError):
            trained_softmax.fgsm_batch(toy_dataset.inputs, toy_dataset.targets(), -0.1)


class TestTraining:
    def test_zero_epochs(self, toy_dataset):
        initial = LinearLayerModel.initialize(3, 12, enums.Pairing.SOFTMAX_CE, seed=1)
        trained = initial.train(toy_dataset, TrainConfig(epochs=0))
        assert np.array_equal(trained.weights, initial.weights)

    @pytest.mark.parametrize("pairing", list(enums.Pairing))
    def test_zero_learning_rate(self, pairing, toy_dataset):
        initial = LinearLayerModel.initialize(3, 12, pairing, seed=2)
        trained = initial.train(toy_dataset, TrainConfig(epochs=3, batch_size=16, learning_rate=0.0, seed=5))
        assert np.array_equal(trained.weights, initial.weights)

    def test_deterministic(self, toy_dataset):
        cfg = TrainConfig(epochs=5, batch_size=16, learning_rate=0.3, seed=9)
        initial = LinearLayerModel.initialize(3, 12, enums.Pairing.SOFTMAX_CE, seed=1)
        assert np.array_equal(initial.train(toy_dataset, cfg).weights, initial.train(toy_dataset, cfg).weights)

    def test_learns_separable_data(self, trained_softmax, trained_linear, toy_dataset):
        assert trained_softmax.accuracy(toy_dataset) >= 0.9
        assert trained_linear.accuracy(toy_dataset) >= 0.8

    def test_divergence_aborts(self, toy_dataset):
        initial = LinearLayerModel.initialize(3, 12, enums.Pairing.LINEAR_MSE, seed=1)
        with pytest.raises(errors.TrainingDivergedError, match="epoch"):
            initial.train(toy_dataset, TrainConfig(epochs=50, batch_size=90, learning_rate=1e6))

    def test_dataset_mismatch(self, toy_dataset):
        with pytest.raises(errors.ShapeMismatchError):
            LinearLayerModel.initialize(3, 5, enums.Pairing.LINEAR_MSE, seed=1).train(toy_dataset, TrainConfig())

    def test_pairing_defaults(self):
        assert TrainConfig.for_pairing(enums.Pairing.SOFTMAX_CE).learning_rate == 0.1
        assert TrainConfig.for_pairing(enums.Pairing.LINEAR_MSE, seed=4).learning_rate == 0.01

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)


class TestAccuracy:
    def test_empty_dataset_warns(self):
        empty = LabeledDataset(np.zeros((0, 2)), np.zeros(0), 2, enums.Split.TEST)
        with pytest.warns(UserWarning):
            assert linear_model(np.eye(2)).accuracy(empty) == 0.0

    def test_zero_weights_predict_class_zero(self, toy_dataset):
        assert linear_model(np.zeros((3, 12))).accuracy(toy_dataset) == pytest.approx(1 / 3)

    def test_memorization(self):
        ds = LabeledDataset(np.eye(3), np.array([0, 1, 2]), 3, enums.Split.TRAIN)
        assert linear_model(np.eye(3)).accuracy(ds) == 1.0

    @pytest.mark.dataset
    def test_mnist_zero_weights(self, real_data_dir):
        _, test = load_mnist(real_data_dir / "mnist")
        assert linear_model(np.zeros((10, 784))).accuracy(test) == pytest.approx(0.098)

    @pytest.mark.dataset
    @pytest.mark.slow
    def test_mnist_softmax_baseline(self, real_data_dir):
        train, test = load_mnist(real_data_dir / "mnist")
        initial = LinearLayerModel.initialize(10, 784, enums.Pairing.SOFTMAX_CE, seed=0)
        trained = initial.train(train, TrainConfig.for_pairing(enums.Pairing.SOFTMAX_CE))
        assert trained.accuracy(test) >= 0.88


class TestModelFile:
    def test_save_load(self, trained_softmax, tmp_path):
        path = tmp_path / "model.txt"
        trained_softmax.save(path)
        loaded = LinearLayerModel.load(path)
        assert np.array_equal(loaded.weights, trained_softmax.weights)
        assert loaded.pairing is enums.Pairing.SOFTMAX_CE
        assert path.read_text().startswith("# xbar-model 3 12 softmax cross_entropy")

    def test_not_a_model(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("1 2 3\n")
        with pytest.raises(errors.DatasetFormatError):
            LinearLayerModel.load(path)
