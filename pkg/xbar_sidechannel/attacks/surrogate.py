"""
This module contains the surrogate-based black box attack.

The attacker queries the oracle crossbar with training images, fits a linear surrogate to the answers
with the composite loss L = L_out + λ·L_power, crafts FGSM inputs on the surrogate and replays them
against the oracle. L_power compares the power the surrogate would draw on a crossbar with the
measured oracle power
"""
import concurrent.futures
import dataclasses
import json
import math
import typing

import numpy as np
import numpy.typing as npt
import structlog
import tqdm

import xbar_sidechannel.attacks.pixel as pixel
import xbar_sidechannel.crossbar as crossbar
import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.linalg_stats as linalg_stats
import xbar_sidechannel.model as model
import xbar_sidechannel.seeds as seeds

log = structlog.get_logger()

SIGNIFICANCE_LEVEL = 0.05

DEFAULT_LAMBDAS = (0.0, 1e-4, 1e-3, 1e-2)
DEFAULT_QUERY_COUNTS = (25, 50, 100, 200, 400, 800, 1600)


def default_surrogate_training() -> model.TrainConfig:
    return model.TrainConfig(epochs=200, batch_size=32, learning_rate=0.05)


@dataclasses.dataclass(frozen=True)
class SurrogateConfig:
    """
    Surrogate training settings.
    power_weight is λ, the weight of the power matching term
    """
    power_weight: float = 0.0
    query_count: int = 100
    query_mode: enums.QueryMode = enums.QueryMode.RAW_OUTPUT
    train: model.TrainConfig = dataclasses.field(default_factory=default_surrogate_training)
    runs: int = 10
    attack_epsilon: float = 0.1
    num_outputs: int = 10

    def __post_init__(self):
        if not math.isfinite(self.power_weight) or self.power_weight < 0:
            raise ValueError("The power loss weight must be finite and non-negative, got {}".format(self.power_weight))
        if self.query_count < 1:
            raise ValueError("At least one query is needed, got {}".format(self.query_count))
        if self.runs < 1:
            raise ValueError("At least one run is needed, got {}".format(self.runs))
        if self.attack_epsilon < 0:
            raise ValueError("The attack strength must be non-negative, got {}".format(self.attack_epsilon))


def collect_queries(
        oracle: crossbar.CrossbarInstance, ds_train: dataset.LabeledDataset, q: int,
        mode: enums.QueryMode, seed: int
) -> typing.List[crossbar.QueryRecord]:
    """
    Queries the oracle with q seeded-random training images, recording the output or label and the power
    :param oracle: the crossbar under attack
    :param ds_train: the training set to draw queries from
    :param q: the number of queries, at most the training set size
    :param mode: what each query reveals
    :param seed: the query selection seed
    """
    subset = dataset.shuffled_subset(ds_train, q, seed)
    noise = np.random.default_rng(seed) if oracle.noise_sigma > 0 else None
    return [oracle.oracle_query(u, mode, with_power=True, rng=noise) for u in subset.inputs]


def query_training_arrays(
        queries: typing.Sequence[crossbar.QueryRecord], num_outputs: int
) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns the query inputs, the surrogate targets (raw outputs, or one-hot labels) and the recorded powers
    :param queries: the query records
    :param num_outputs: M, used to one-hot encode labels
    """
    if not queries:
        raise errors.EmptyInputError("Surrogate training needs at least one query")

    inputs = np.vstack([record.input for record in queries])
    if any(record.power is None for record in queries):
        raise errors.QueryModeError("Every query must carry a power reading")
    powers = np.array([record.power for record in queries], dtype=np.float64)

    if all(record.output is not None for record in queries):
        targets = np.vstack([record.output for record in queries])
    elif all(record.label is not None for record in queries):
        targets = linalg_stats.one_hot([record.label for record in queries], num_outputs)
    else:
        raise errors.QueryModeError("Queries must all carry raw outputs or all carry labels")
    return inputs, targets, powers


def surrogate_power_prediction(s: model.LinearLayerModel, u: npt.ArrayLike) -> float:
    """
    Returns the supply current the surrogate would draw if compiled to a crossbar: Σ_j u_j Σ_i |ŵ_ij|
    :param s: the surrogate
    :param u: the input
    """
    u = linalg_stats.as_vector(u, "input")
    return float(u @ np.sum(np.abs(s.weights), axis=0))


def surrogate_loss_and_gradient(
        weights: np.ndarray, inputs: np.ndarray, targets: np.ndarray, powers: np.ndarray, power_weight: float
) -> typing.Tuple[float, np.ndarray]:
    """
    Returns the composite loss L_out + λ·L_power over a batch and its gradient with respect to the weights.
    L_out is the MSE of the outputs, L_power the MSE of the predicted against the measured power.
    The power term uses the subgradient sgn(ŵ_ij) with sgn(0) = 0
    :param weights: the (M x N) surrogate weights
    :param inputs: the (B x N) batch inputs
    :param targets: the (B x M) targets
    :param powers: the B measured powers
    :param power_weight: λ
    """
    batch, num_outputs = targets.shape
    residual = inputs @ weights.T - targets
    loss = float(np.mean(residual ** 2))
    grad = (2.0 / num_outputs) * residual.T @ inputs / batch

    if power_weight > 0:
        power_error = inputs @ np.sum(np.abs(weights), axis=0) - powers
        loss += power_weight * float(np.mean(power_error ** 2))
        grad = grad + power_weight * np.sign(weights) * (2.0 * power_error @ inputs / batch)[None, :]

    return loss, grad


def train_surrogate(queries: typing.Sequence[crossbar.QueryRecord], cfg: SurrogateConfig) -> model.LinearLayerModel:
    """
    Fits a linear surrogate to the query records with the composite loss.
    With λ = 0 the recorded powers are not used at all
    :param queries: the oracle query records
    :param cfg: the surrogate settings; cfg.train.seed seeds the initial weights and the batch order
    """
    inputs, targets, powers = query_training_arrays(queries, cfg.num_outputs)
    initial = model.LinearLayerModel.initialize(
        targets.shape[1], inputs.shape[1], enums.Pairing.LINEAR_MSE, cfg.train.seed
    )

    def step(w: np.ndarray, indices: np.ndarray) -> typing.Tuple[float, np.ndarray]:
        return surrogate_loss_and_gradient(w, inputs[indices], targets[indices], powers[indices], cfg.power_weight)

    weights = model.minibatch_sgd(initial.weights, inputs.shape[0], cfg.train, step)
    return initial.with_weights(weights)


def transfer_attack_eval(
        oracle: crossbar.CrossbarInstance, surrogate: model.LinearLayerModel,
        ds_test: dataset.LabeledDataset, epsilon: float, clip: bool = True
) -> float:
    """
    Crafts FGSM inputs from the surrogate's gradients (true labels) and returns the oracle accuracy on them
    :param oracle: the crossbar under attack
    :param surrogate: the attacker's model
    :param ds_test: the test set
    :param epsilon: the attack strength
    :param clip: clip adversarial inputs to [0, 1]
    """
    if len(ds_test) == 0:
        return 0.0

    targets = ds_test.targets()
    correct = 0
    for start in range(0, len(ds_test), model.EVAL_CHUNK):
        stop = start + model.EVAL_CHUNK
        adversarial = surrogate.fgsm_batch(ds_test.inputs[start:stop], targets[start:stop], epsilon, clip)
        correct += int(np.sum(oracle.predict(adversarial, validate=clip) == ds_test.labels[start:stop]))
    return correct / len(ds_test)


@dataclasses.dataclass(frozen=True)
class TransferCell:
    """
    The raw outcome of one (λ, Q, run) surrogate attack
    """
    power_weight: float
    query_count: int
    run: int
    surrogate_accuracy: float
    oracle_clean_accuracy: float
    oracle_adversarial_accuracy: float

    @property
    def degradation(self) -> float:
        return self.oracle_clean_accuracy - self.oracle_adversarial_accuracy


@dataclasses.dataclass(frozen=True)
class CellSummary:
    power_weight: float
    query_count: int
    surrogate_accuracy_mean: float
    surrogate_accuracy_std: float
    oracle_adversarial_accuracy_mean: float
    oracle_adversarial_accuracy_std: float
    degradation_mean: float


@dataclasses.dataclass(frozen=True)
class Improvement:
    """
    The gain in oracle accuracy degradation from the best non-zero λ over λ = 0 at one query count
    """
    query_count: int
    best_power_weight: float
    improvement: float
    t: float
    p: float

    @property
    def significant(self) -> bool:
        return self.p < SIGNIFICANCE_LEVEL


@dataclasses.dataclass(frozen=True)
class TransferResult:
    """
    All raw cells of a power benefit study. Every summary is computed from the cells
    """
    mode: enums.QueryMode
    epsilon: float
    cells: typing.Tuple[TransferCell, ...]

    def _group(self) -> typing.Dict[typing.Tuple[float, int], typing.List[TransferCell]]:
        groups = {}
        for cell in sorted(self.cells, key=lambda c: (c.power_weight, c.query_count, c.run)):
            groups.setdefault((cell.power_weight, cell.query_count), []).append(cell)
        return groups

    def summaries(self) -> typing.List[CellSummary]:
        summaries = []
        for (power_weight, q), cells in self._group().items():
            surrogate_acc = np.array([c.surrogate_accuracy for c in cells])
            adversarial_acc = np.array([c.oracle_adversarial_accuracy for c in cells])
            summaries.append(CellSummary(
                power_weight, q,
                float(surrogate_acc.mean()), float(surrogate_acc.std()),
                float(adversarial_acc.mean()), float(adversarial_acc.std()),
                float(np.mean([c.degradation for c in cells])),
            ))
        return summaries

    def improvements(self) -> typing.List[Improvement]:
        groups = self._group()
        improvements = []

        for q in sorted({q for _, q in groups}):
            baseline = [c.degradation for c in groups.get((0.0, q), [])]
            candidates = sorted(
                (w for w, cq in groups if cq == q and w != 0.0),
                key=lambda w: (-np.mean([c.degradation for c in groups[(w, q)]]), w),
            )
            if not baseline or not candidates:
                improvements.append(Improvement(q, 0.0, 0.0, 0.0, 1.0))
                continue

            best = candidates[0]
            treated = [c.degradation for c in groups[(best, q)]]
            delta = float(np.mean(treated) - np.mean(baseline))
            if len(treated) < 2 or len(baseline) < 2:
                t, p = 0.0, 1.0
            else:
                t, p = linalg_stats.two_sample_t_test(treated, baseline)
            improvements.append(Improvement(q, best, delta, t, p))

        return improvements

    def rows(self, dataset_name: str) -> typing.List[typing.Tuple]:
        """
        Returns (dataset, mode, lambda, q, run, surrogate_acc, oracle_adv_acc) rows
        """
        return [
            (dataset_name, self.mode.value, c.power_weight, c.query_count, c.run,
             c.surrogate_accuracy, c.oracle_adversarial_accuracy)
            for c in sorted(self.cells, key=lambda c: (c.power_weight, c.query_count, c.run))
        ]

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "mode": self.mode.value,
            "epsilon": self.epsilon,
            "cells": [dataclasses.asdict(c) for c in sorted(
                self.cells, key=lambda c: (c.power_weight, c.query_count, c.run))],
            "summaries": [dataclasses.asdict(s) for s in self.summaries()],
            "improvements": [dict(dataclasses.asdict(i), significant=i.significant) for i in self.improvements()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _run_cell(
        oracle: crossbar.CrossbarInstance, clean_accuracy: float, train_ds: dataset.LabeledDataset,
        test_ds: dataset.LabeledDataset, lambdas: typing.Sequence[float], q: int, run: int,
        mode: enums.QueryMode, epsilon: float, train_cfg: model.TrainConfig, seed: int
) -> typing.List[TransferCell]:
    # the same queries and initial weights are shared by every λ, so the λ comparison is paired
    queries = collect_queries(oracle, train_ds, q, mode, seeds.derive_seed(seed, "queries/run{}/q{}".format(run, q)))
    init_seed = seeds.derive_seed(seed, "surrogate/run{}/q{}".format(run, q))

    cells = []
    for power_weight in lambdas:
        cfg = SurrogateConfig(
            power_weight=power_weight, query_count=q, query_mode=mode,
            train=dataclasses.replace(train_cfg, seed=init_seed), runs=1,
            attack_epsilon=epsilon, num_outputs=oracle.num_outputs,
        )
        surrogate = train_surrogate(queries, cfg)
        cells.append(TransferCell(
            power_weight=float(power_weight), query_count=q, run=run,
            surrogate_accuracy=surrogate.accuracy(test_ds),
            oracle_clean_accuracy=clean_accuracy,
            oracle_adversarial_accuracy=transfer_attack_eval(oracle, surrogate, test_ds, epsilon),
        ))
    return cells


def power_benefit_study(
        oracles: typing.Union[crossbar.CrossbarInstance, typing.Sequence[crossbar.CrossbarInstance]],
        train_ds: dataset.LabeledDataset,
        test_ds: dataset.LabeledDataset,
        lambdas: typing.Sequence[float],
        qs: typing.Sequence[int],
        mode: enums.QueryMode,
        runs: int,
        epsilon: float,
        seed: int,
        train_cfg: typing.Optional[model.TrainConfig] = None,
        jobs: int = 1,
        progress: bool = False,
) -> TransferResult:
    """
    Runs the surrogate attack over a (λ, Q, run) grid and measures what the power term adds
    :param oracles: one crossbar per run, or a single crossbar reused by every run
    :param train_ds: the set queries are drawn from
    :param test_ds: the set surrogate accuracy and attack success are measured on
    :param lambdas: the power loss weights, must include 0 (the baseline)
    :param qs: the query counts, repeated entries are run once
    :param mode: what each query reveals
    :param runs: the number of independent runs per cell
    :param epsilon: the FGSM attack strength
    :param seed: the study seed; every (run, Q) cell derives its own streams from it
    :param train_cfg: the surrogate hyperparameters (its seed is replaced per cell)
    :param jobs: worker threads for the grid
    :param progress: show a progress bar
    """
    if 0.0 not in [float(w) for w in lambdas]:
        raise errors.ConfigError("lambdas", "must include 0, the baseline without power information")
    if isinstance(oracles, crossbar.CrossbarInstance):
        oracles = [oracles] * runs
    if len(oracles) != runs:
        raise errors.ShapeMismatchError("Need one oracle per run", (len(oracles),), (runs,))

    train_cfg = train_cfg or default_surrogate_training()
    lambdas = sorted({float(w) for w in lambdas})
    clean = [pixel.oracle_accuracy(o, test_ds.inputs, test_ds.labels, clipped=True) for o in oracles]
    tasks = [(run, q) for run in range(runs) for q in sorted(set(qs))]

    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        futures = {
            pool.submit(
                _run_cell, oracles[run], clean[run], train_ds, test_ds, lambdas, q, run,
                mode, epsilon, train_cfg, seed
            ): (run, q)
            for run, q in tasks
        }
        done = tqdm.tqdm(
            concurrent.futures.as_completed(futures), total=len(futures),
            desc="surrogate {}".format(mode.value), disable=None if progress else True,
        )
        results = {futures[future]: future.result() for future in done}

    cells = tuple(cell for key in sorted(results) for cell in results[key])
    result = TransferResult(mode, float(epsilon), cells)
    for improvement in result.improvements():
        log.info(
            "power benefit", mode=mode.value, q=improvement.query_count, best_lambda=improvement.best_power_weight,
            improvement=improvement.improvement, p=improvement.p,
        )
    return result
