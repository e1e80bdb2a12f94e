import dataclasses
import json

import numpy as np
import pytest

import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
from xbar_sidechannel.attacks import surrogate
from xbar_sidechannel.attacks.pixel import oracle_accuracy
from xbar_sidechannel.crossbar import CrossbarInstance
from xbar_sidechannel.model import LinearLayerModel, TrainConfig

from conftest import train_oracle

SHORT_TRAINING = TrainConfig(epochs=20, batch_size=8, learning_rate=0.05, seed=1)


@pytest.fixture
def oracle(trained_linear) -> CrossbarInstance:
    return CrossbarInstance.compile(trained_linear)


class TestPowerPrediction:
    def test_direct_summation(self):
        s = LinearLayerModel.from_pairing([[1.0, -1.0]], enums.Pairing.LINEAR_MSE)
        assert surrogate.surrogate_power_prediction(s, [0.5, 0.5]) == 1.0

    def test_zero_weights(self):
        s = LinearLayerModel.from_pairing(np.zeros((2, 3)), enums.Pairing.LINEAR_MSE)
        assert surrogate.surrogate_power_prediction(s, [0.2, 0.4, 0.6]) == 0.0

    def test_matches_oracle_power(self, trained_linear, oracle, toy_dataset):
        for u in toy_dataset.inputs[:10]:
            assert surrogate.surrogate_power_prediction(trained_linear, u) == pytest.approx(oracle.total_current(u))


class TestCollectQueries:
    def test_single_query(self, oracle, toy_dataset):
        (record,) = surrogate.collect_queries(oracle, toy_dataset, 1, enums.QueryMode.RAW_OUTPUT, seed=0)
        assert record.power == oracle.total_current(record.input)
        assert np.array_equal(record.output, oracle.forward(record.input))

    def test_label_only(self, oracle, toy_dataset):
        records = surrogate.collect_queries(oracle, toy_dataset, 5, enums.QueryMode.LABEL_ONLY, seed=0)
        assert all(r.output is None and isinstance(r.label, int) and r.power is not None for r in records)

    def test_deterministic(self, oracle, toy_dataset):
        first = surrogate.collect_queries(oracle, toy_dataset, 8, enums.QueryMode.RAW_OUTPUT, seed=4)
        second = surrogate.collect_queries(oracle, toy_dataset, 8, enums.QueryMode.RAW_OUTPUT, seed=4)
        assert all(np.array_equal(a.input, b.input) for a, b in zip(first, second))

    def test_too_many(self, oracle, toy_dataset):
        with pytest.raises(errors.SampleSizeError):
            surrogate.collect_queries(oracle, toy_dataset, 91, enums.QueryMode.RAW_OUTPUT, seed=0)


class TestLossAndGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        weights = rng.normal(size=(3, 4))
        inputs = rng.uniform(size=(5, 4))
        targets = rng.normal(size=(5, 3))
        powers = rng.uniform(1.0, 3.0, size=5)

        _, grad = surrogate.surrogate_loss_and_gradient(weights, inputs, targets, powers, 0.3)
        h = 1e-6
        for i in range(3):
            for j in range(4):
                step = np.zeros_like(weights)
                step[i, j] = h
                up, _ = surrogate.surrogate_loss_and_gradient(weights + step, inputs, targets, powers, 0.3)
                down, _ = surrogate.surrogate_loss_and_gradient(weights - step, inputs, targets, powers, 0.3)
                assert grad[i, j] == pytest.approx((up - down) / (2 * h), rel=1e-5)

    def test_zero_weight_ignores_power(self):
        rng = np.random.default_rng(1)
        weights, inputs, targets = rng.normal(size=(2, 3)), rng.uniform(size=(4, 3)), rng.normal(size=(4, 2))
        a = surrogate.surrogate_loss_and_gradient(weights, inputs, targets, np.zeros(4), 0.0)
        b = surrogate.surrogate_loss_and_gradient(weights, inputs, targets, np.full(4, 1e9), 0.0)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])


class TestTrainSurrogate:
    def test_zero_power_weight_ignores_recorded_power(self, oracle, toy_dataset):
        queries = surrogate.collect_queries(oracle, toy_dataset, 30, enums.QueryMode.RAW_OUTPUT, seed=2)
        shifted = [dataclasses.replace(q, power=q.power * 7.0 + 1.0) for q in queries]
        cfg = surrogate.SurrogateConfig(power_weight=0.0, train=SHORT_TRAINING, num_outputs=3)
        assert np.array_equal(
            surrogate.train_surrogate(queries, cfg).weights, surrogate.train_surrogate(shifted, cfg).weights
        )

    def test_raw_outputs_approach_oracle(self, oracle, toy_dataset):
        queries = surrogate.collect_queries(oracle, toy_dataset, 90, enums.QueryMode.RAW_OUTPUT, seed=2)
        cfg = surrogate.SurrogateConfig(
            train=TrainConfig(epochs=200, batch_size=10, learning_rate=0.5, seed=1), num_outputs=3,
        )
        s = surrogate.train_surrogate(queries, cfg)
        assert np.mean(s.predict(toy_dataset.inputs) == oracle.predict(toy_dataset.inputs)) >= 0.9

    def test_label_only_queries(self, oracle, toy_dataset):
        queries = surrogate.collect_queries(oracle, toy_dataset, 30, enums.QueryMode.LABEL_ONLY, seed=2)
        cfg = surrogate.SurrogateConfig(power_weight=1e-3, train=SHORT_TRAINING, num_outputs=3)
        assert surrogate.train_surrogate(queries, cfg).weights.shape == (3, 12)

    def test_queries_without_power(self, oracle, toy_dataset):
        record = oracle.oracle_query(toy_dataset.inputs[0], enums.QueryMode.RAW_OUTPUT, with_power=False)
        with pytest.raises(errors.QueryModeError):
            surrogate.train_surrogate([record], surrogate.SurrogateConfig(num_outputs=3))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            surrogate.SurrogateConfig(power_weight=-1.0)


class TestTransferAttack:
    def test_zero_strength_is_clean(self, oracle, trained_softmax, toy_dataset):
        accuracy = surrogate.transfer_attack_eval(oracle, trained_softmax, toy_dataset, 0.0)
        assert accuracy == oracle_accuracy(oracle, toy_dataset.inputs, toy_dataset.labels, clipped=True)

    def test_self_transfer_is_white_box(self, trained_softmax, toy_dataset):
        oracle = CrossbarInstance.compile(trained_softmax)
        adversarial = trained_softmax.fgsm_batch(toy_dataset.inputs, toy_dataset.targets(), 0.3)
        expected = float(np.mean(trained_softmax.predict(adversarial) == toy_dataset.labels))
        assert surrogate.transfer_attack_eval(oracle, trained_softmax, toy_dataset, 0.3) == expected


def cell(power_weight, run, degradation) -> surrogate.TransferCell:
    return surrogate.TransferCell(power_weight, 50, run, 0.8, 0.9, 0.9 - degradation)


class TestTransferResult:
    @pytest.fixture
    def result(self) -> surrogate.TransferResult:
        cells = [cell(0.0, r, d) for r, d in enumerate((0.10, 0.11, 0.12))]
        cells += [cell(1e-3, r, d) for r, d in enumerate((0.30, 0.31, 0.29))]
        cells += [cell(1e-2, r, d) for r, d in enumerate((0.20, 0.21, 0.19))]
        return surrogate.TransferResult(enums.QueryMode.RAW_OUTPUT, 0.1, tuple(cells))

    def test_improvement(self, result):
        (improvement,) = result.improvements()
        assert improvement.query_count == 50
        assert improvement.best_power_weight == 1e-3
        assert improvement.improvement == pytest.approx(0.19)
        assert improvement.t > 0
        assert improvement.significant

    def test_summaries(self, result):
        summaries = result.summaries()
        assert [s.power_weight for s in summaries] == [0.0, 1e-3, 1e-2]
        assert summaries[0].degradation_mean == pytest.approx(0.11)

    def test_rows(self, result):
        rows = result.rows("toy")
        assert len(rows) == 9
        assert rows[0] == ("toy", "raw_output", 0.0, 50, 0, 0.8, pytest.approx(0.8))

    def test_json(self, result):
        document = json.loads(result.to_json())
        assert document["mode"] == "raw_output"
        assert document["improvements"][0]["significant"] is True


class TestPowerBenefitStudy:
    def study(self, oracle, toy_dataset, **kwargs):
        arguments = dict(
            lambdas=[0.0, 1e-3], qs=[10, 20], mode=enums.QueryMode.RAW_OUTPUT, runs=2, epsilon=0.2,
            seed=3, train_cfg=SHORT_TRAINING,
        )
        arguments.update(kwargs)
        return surrogate.power_benefit_study(oracle, toy_dataset, toy_dataset, **arguments)

    def test_grid(self, oracle, toy_dataset):
        result = self.study(oracle, toy_dataset)
        assert len(result.cells) == 2 * 2 * 2
        assert [i.query_count for i in result.improvements()] == [10, 20]

    def test_parallel_matches_serial(self, oracle, toy_dataset):
        assert self.study(oracle, toy_dataset, jobs=1).to_json() == self.study(oracle, toy_dataset, jobs=3).to_json()

    def test_repeated_query_counts_run_once(self, oracle, toy_dataset):
        repeated = self.study(oracle, toy_dataset, qs=[20, 10, 20])
        assert repeated.to_json() == self.study(oracle, toy_dataset, qs=[10, 20]).to_json()
        assert len(repeated.cells) == 2 * 2 * 2

    def test_baseline_required(self, oracle, toy_dataset):
        with pytest.raises(errors.ConfigError, match="must include 0"):
            self.study(oracle, toy_dataset, lambdas=[1e-3])

    def test_one_oracle_per_run(self, oracle, toy_dataset):
        with pytest.raises(errors.ShapeMismatchError):
            self.study([oracle], toy_dataset, runs=2)


@pytest.mark.dataset
@pytest.mark.slow
class TestMnistPowerBenefit:
    def oracles(self, train, runs):
        return [CrossbarInstance.compile(train_oracle(train, enums.Pairing.LINEAR_MSE, seed)) for seed in range(runs)]

    def test_raw_output_gain(self, real_mnist):
        train, test = real_mnist
        result = surrogate.power_benefit_study(
            self.oracles(train, 10), train, test, surrogate.DEFAULT_LAMBDAS, [100, 200, 400],
            enums.QueryMode.RAW_OUTPUT, runs=10, epsilon=0.1, seed=0, jobs=4,
        )
        assert any(i.improvement >= 0.03 and i.p < 0.05 for i in result.improvements())

    def test_label_only_gain(self, real_mnist):
        train, test = real_mnist
        result = surrogate.power_benefit_study(
            self.oracles(train, 10), train, test, surrogate.DEFAULT_LAMBDAS, [100, 200, 400],
            enums.QueryMode.LABEL_ONLY, runs=10, epsilon=0.1, seed=0, jobs=4,
        )
        assert any(i.improvement > 0 and i.significant for i in result.improvements())

    def test_no_gain_once_recovery_is_exact(self, real_mnist):
        train, test = real_mnist
        result = surrogate.power_benefit_study(
            self.oracles(train, 10), train, test, [0.0, 1e-3], [784],
            enums.QueryMode.RAW_OUTPUT, runs=10, epsilon=0.1, seed=0, jobs=4,
        )
        (improvement,) = result.improvements()
        assert improvement.p >= 0.05
