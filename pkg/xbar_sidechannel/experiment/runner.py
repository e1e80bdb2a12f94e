"""
This module contains the experiment runner.

Each experiment trains its oracle(s), programs them onto crossbars and writes plot-ready CSV/JSON files into
the output directory. manifest.json is written last and lists every other file with its columns,
the configuration, the timings and every derived seed
"""
import concurrent.futures
import dataclasses
import json
import pathlib
import time
import typing

import numpy as np
import structlog

import xbar_sidechannel
import xbar_sidechannel.attacks.pixel as pixel
import xbar_sidechannel.attacks.recovery as recovery
import xbar_sidechannel.attacks.surrogate as surrogate
import xbar_sidechannel.crossbar as crossbar
import xbar_sidechannel.data.cifar10 as cifar10
import xbar_sidechannel.data.dataset as dataset
import xbar_sidechannel.data.mnist as mnist
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.experiment.artifacts as artifacts
import xbar_sidechannel.experiment.config as config
import xbar_sidechannel.linalg_stats as linalg_stats
import xbar_sidechannel.model as model
import xbar_sidechannel.power_sidechannel as power_sidechannel
import xbar_sidechannel.seeds as seeds

log = structlog.get_logger()

# directory names tried under data_dir before data_dir itself
DATASET_SUBDIRS = {
    enums.DatasetName.MNIST: ("mnist",),
    enums.DatasetName.CIFAR10: ("cifar-10-batches-bin", "cifar10"),
}

LOADERS = {
    enums.DatasetName.MNIST: mnist.MnistLoader,
    enums.DatasetName.CIFAR10: cifar10.Cifar10Loader,
}

# the grid a per-input map is exported as; CIFAR-10 maps are cut to their first colour channel
MAP_LAYOUTS = {
    enums.DatasetName.MNIST: (28, 28),
    enums.DatasetName.CIFAR10: (32, 32),
}

TABLE1_COLUMNS = ("dataset", "pairing", "split", "mean_correlation", "correlation_of_mean", "runs")
ATTACK_COLUMNS = ("strategy", "epsilon", "accuracy", "seed", "run")
MULTI_PIXEL_COLUMNS = ("strategy", "n_pixels", "epsilon", "accuracy", "seed", "run")
SURROGATE_COLUMNS = ("dataset", "mode", "lambda", "q", "run", "surrogate_acc", "oracle_adv_acc")
IMPROVEMENT_COLUMNS = ("dataset", "mode", "q", "best_lambda", "improvement", "t", "p", "significant")
RECOVERY_COLUMNS = ("query_kind", "q", "rank", "relative_error")


@dataclasses.dataclass
class RunManifest:
    """
    The record of one run: what was asked, what was written and how to re-create every random stream
    """
    config: typing.Dict[str, typing.Any]
    version: str
    artifacts: typing.List[artifacts.ArtifactRecord]
    timings: typing.Dict[str, float]
    seed_lineage: typing.Dict[str, typing.Any]

    def to_dict(self) -> typing.Dict[str, typing.Any]:
        return {
            "config": self.config,
            "version": self.version,
            "artifacts": [a.to_dict() for a in self.artifacts],
            "data_dictionary": {a.name: list(a.columns) for a in self.artifacts if a.columns},
            "timings": self.timings,
            "seed_lineage": self.seed_lineage,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def dataset_directory(data_dir: pathlib.Path, name: enums.DatasetName) -> pathlib.Path:
    """
    Returns the directory holding one dataset's files: a known sub-directory of data_dir if present, else data_dir
    """
    for subdir in DATASET_SUBDIRS[name]:
        candidate = data_dir / subdir
        if candidate.is_dir():
            return candidate
    return data_dir


class ExperimentRunner:
    """
    This object runs one configured experiment
    """

    def __init__(self, cfg: config.ExperimentConfig, progress: bool = False):
        """
        :param cfg: the validated configuration
        :param progress: show progress bars for the long grids
        """
        self.cfg = cfg
        self.progress = progress
        self.lineage = seeds.SeedLineage(cfg.seed)
        self.writer = artifacts.ArtifactWriter(cfg.output_dir)
        self.timings = {}       # type: typing.Dict[str, float]
        self._datasets = None   # type: typing.Optional[typing.Tuple[dataset.LabeledDataset, dataset.LabeledDataset]]

    def run(self) -> RunManifest:
        experiments = {
            enums.ExperimentName.TABLE1: self.table1,
            enums.ExperimentName.FIG3_HEATMAPS: self.fig3_heatmaps,
            enums.ExperimentName.FIG4_SINGLE_PIXEL: self.fig4_single_pixel,
            enums.ExperimentName.FIG5_SURROGATE: self.fig5_surrogate,
            enums.ExperimentName.RECOVERY_CHECK: self.recovery_check,
        }
        log.info(
            "experiment started", experiment=self.cfg.experiment.value, dataset=self.cfg.dataset.value,
            seed=self.cfg.seed, output_dir=str(self.cfg.output_dir),
        )
        self.writer.prepare()
        started = time.perf_counter()
        experiments[self.cfg.experiment]()
        self.timings["total"] = time.perf_counter() - started

        manifest = RunManifest(
            config=config.config_to_dict(self.cfg),
            version=xbar_sidechannel.__version__,
            artifacts=self.writer.records,
            timings=dict(sorted(self.timings.items())),
            seed_lineage=self.lineage.as_dict(),
        )
        path = self.writer.path_for(artifacts.MANIFEST_NAME)
        try:
            path.write_text(manifest.to_json(), encoding="utf-8")
        except OSError as e:
            raise errors.ArtifactWriteError(path, e) from e
        log.info("experiment finished", experiment=self.cfg.experiment.value, seconds=self.timings["total"])
        return manifest

    def _timed(self, label: str, started: float):
        self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - started

    def datasets(self) -> typing.Tuple[dataset.LabeledDataset, dataset.LabeledDataset]:
        """
        Returns the (train, test) splits of the configured dataset, loading them once
        """
        if self._datasets is None:
            started = time.perf_counter()
            directory = dataset_directory(self.cfg.data_dir, self.cfg.dataset)
            self._datasets = LOADERS[self.cfg.dataset](directory).load()
            self._timed("load_dataset", started)
        return self._datasets

    def train_oracle(self, pairing: enums.Pairing, train: dataset.LabeledDataset, label: str) -> model.LinearLayerModel:
        """
        Trains one oracle model; its initial weights and batch order come from the component seed of label
        """
        seed = self.lineage.seed(label)
        initial = model.LinearLayerModel.initialize(train.num_classes, train.feature_dim, pairing, seed)
        return initial.train(train, self.cfg.train.for_pairing(pairing, seed))

    def train_oracles(self, pairing: enums.Pairing, train: dataset.LabeledDataset,
                      labels: typing.Sequence[str]) -> typing.List[model.LinearLayerModel]:
        started = time.perf_counter()
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.cfg.jobs) as pool:
            models = list(pool.map(lambda label: self.train_oracle(pairing, train, label), labels))
        self._timed("train_{}".format(labels[0].split("/")[0]), started)
        return models

    def compile(self, m: model.LinearLayerModel) -> crossbar.CrossbarInstance:
        return crossbar.CrossbarInstance.compile(m, noise_sigma=self.cfg.noise_sigma)

    def extract_norms(self, oracle: crossbar.CrossbarInstance, label: str) -> power_sidechannel.ColumnNormProfile:
        """
        Extracts the column 1-norms; with measurement noise configured the readings draw from the seed of label
        """
        rng = np.random.default_rng(self.lineage.seed(label)) if oracle.noise_sigma > 0 else None
        return power_sidechannel.extract_column_norms(oracle, rng)

    def _export_map(self, values: np.ndarray, name: str, description: str):
        h, w = MAP_LAYOUTS[self.cfg.dataset]
        power_sidechannel.export_heatmap_csv(values[:h * w], (h, w), self.writer.path_for(name))
        self.writer.register(name, description)

    def table1(self):
        """
        Correlation between loss sensitivity and extracted column 1-norms, per pairing and split
        """
        settings = self.cfg.table1
        train, test = self.datasets()
        splits = {enums.Split.TRAIN: train, enums.Split.TEST: test}
        rows = []
        document = {"dataset": self.cfg.dataset.value, "rows": []}

        for pairing in settings.pairings:
            labels = ["table1/{}/run{}".format(pairing.value, r) for r in range(settings.runs)]
            models = self.train_oracles(pairing, train, labels)
            for split in settings.splits:
                report = power_sidechannel.correlation_study(models, splits[split])
                rows.append((self.cfg.dataset.value, pairing.value, split.value,
                             report.mean_correlation, report.correlation_of_mean, report.runs))
                document["rows"].append(dict(report.to_dict(), pairing=pairing.value, split=split.value))

        self.writer.write_csv("table1.csv", TABLE1_COLUMNS, rows, "sensitivity vs column 1-norm correlation")
        self.writer.write_json("table1.json", document, "per-run correlations behind table1.csv")

    def fig3_heatmaps(self):
        """
        Mean loss sensitivity and extracted column 1-norms as image-shaped grids, one pair per pairing
        """
        train, test = self.datasets()
        for pairing in self.cfg.heatmap.pairings:
            m = self.train_oracles(pairing, train, ["fig3/{}".format(pairing.value)])[0]
            profile = self.extract_norms(self.compile(m), "fig3/{}/noise".format(pairing.value))
            self._export_map(
                power_sidechannel.sensitivity_heatmap(m, test), "sensitivity_{}.csv".format(pairing.value),
                "mean |dL/du| on the test set, image grid without header",
            )
            self._export_map(
                profile.norms, "norms_{}.csv".format(pairing.value),
                "power-extracted column 1-norms, image grid without header",
            )

    def fig4_single_pixel(self):
        """
        Oracle accuracy under the pixel attacks across attack strengths, for one and for several pixels
        """
        settings = self.cfg.attack
        train, test = self.datasets()
        strengths = settings.epsilons or tuple(pixel.default_epsilon_grid())
        labels = ["fig4/run{}/oracle".format(r) for r in range(settings.runs)]
        models = self.train_oracles(self.cfg.pairing, train, labels)

        curves = {strategy: [] for strategy in settings.strategies}
        multi_rows = []
        summary = {"pairing": self.cfg.pairing.value, "runs": []}
        started = time.perf_counter()

        for run, m in enumerate(models):
            oracle = self.compile(m)
            profile = self.extract_norms(oracle, "fig4/run{}/noise".format(run))
            run_summary = {
                "run": run,
                "clean_accuracy": pixel.oracle_accuracy(oracle, test.inputs, test.labels, clipped=True),
                "strongest_column": profile.strongest_column,
                "random_direction_agreement": {},
            }

            for strategy in settings.strategies:
                seed = self.lineage.seed("fig4/run{}/{}".format(run, strategy.file_tag))
                curves[strategy].append(pixel.attack_curve(
                    oracle, profile, m, test, strategy, strengths, seed, run=run, clip=settings.clip,
                ))

            for n_pixels in settings.n_pixels:
                for strategy in settings.strategies:
                    seed = self.lineage.seed("fig4/run{}/{}/n{}".format(run, strategy.file_tag, n_pixels))
                    curve = pixel.attack_curve(
                        oracle, profile, m, test, strategy, strengths, seed,
                        run=run, n_pixels=n_pixels, clip=settings.clip,
                    )
                    multi_rows.extend(
                        (strategy.value, n_pixels, eps, acc, seed, run)
                        for eps, acc in zip(curve.strengths, curve.accuracy)
                    )
                rd_seed = self.lineage.seed("fig4/run{}/rd_agreement/n{}".format(run, n_pixels))
                run_summary["random_direction_agreement"][str(n_pixels)] = pixel.random_direction_agreement(
                    profile, m, test, n_pixels, rd_seed,
                )

            if settings.exhaustive_samples:
                subset = dataset.shuffled_subset(
                    test, min(settings.exhaustive_samples, len(test)), self.lineage.seed("fig4/run{}/exhaustive".format(run)),
                )
                run_summary["exhaustive_epsilon"] = max(strengths)
                run_summary["exhaustive_accuracy"] = pixel.exhaustive_single_pixel_accuracy(
                    oracle, subset, max(strengths), settings.clip,
                )
            summary["runs"].append(run_summary)

        self._timed("attacks", started)
        for strategy, strategy_curves in curves.items():
            self.writer.write_csv(
                "attack_{}.csv".format(strategy.file_tag), ATTACK_COLUMNS,
                [row for curve in strategy_curves for row in curve.rows()],
                "oracle test accuracy under the {} single-pixel attack".format(strategy.value),
            )
        if settings.n_pixels:
            self.writer.write_csv("multi_pixel.csv", MULTI_PIXEL_COLUMNS, multi_rows,
                                  "oracle test accuracy when several pixels are attacked")
        self.writer.write_json("attack_summary.json", summary,
                               "clean accuracy, random-direction sign agreement and exhaustive-search accuracy per run")

    def fig5_surrogate(self):
        """
        Surrogate transfer attacks with and without the power term, per query mode
        """
        settings = self.cfg.surrogate
        train, test = self.datasets()
        labels = ["fig5/run{}/oracle".format(r) for r in range(settings.runs)]
        oracles = [self.compile(m) for m in self.train_oracles(settings.oracle_pairing, train, labels)]

        for mode in settings.modes:
            started = time.perf_counter()
            result = surrogate.power_benefit_study(
                oracles, train, test, settings.lambdas, settings.query_counts, mode, settings.runs,
                settings.epsilon, self.lineage.seed("fig5/{}".format(mode.value)),
                train_cfg=settings.train_config(), jobs=self.cfg.jobs, progress=self.progress,
            )
            self._timed("surrogate_{}".format(mode.value), started)

            self.writer.write_csv(
                "surrogate_{}.csv".format(mode.value), SURROGATE_COLUMNS, result.rows(self.cfg.dataset.value),
                "surrogate accuracy and oracle accuracy under transfer attack per (lambda, q, run)",
            )
            self.writer.write_csv(
                "surrogate_{}_improvement.csv".format(mode.value), IMPROVEMENT_COLUMNS,
                [(self.cfg.dataset.value, mode.value, i.query_count, i.best_power_weight, i.improvement,
                  i.t, i.p, i.significant) for i in result.improvements()],
                "gain of the best non-zero lambda over lambda = 0 with a two-sample t-test",
            )
            self.writer.write_text(
                "surrogate_{}.json".format(mode.value), result.to_json() + "\n",
                "every cell, per-cell summaries and improvements",
            )

    def recovery_check(self):
        """
        Exact weight recovery of a linear oracle from basis probes, uniform random inputs and training images
        """
        settings = self.cfg.recovery
        train, _ = self.datasets()
        m = self.train_oracles(enums.Pairing.LINEAR_MSE, train, ["recovery/oracle"])[0]
        oracle = self.compile(m)
        q = settings.query_count or oracle.num_inputs

        rng = np.random.default_rng(self.lineage.seed("recovery/uniform"))
        uniform = rng.uniform(0.0, oracle.vdd, size=(q, oracle.num_inputs))
        images = dataset.shuffled_subset(train, min(q, len(train)), self.lineage.seed("recovery/training")).inputs

        query_sets = {
            "basis": recovery.basis_probe_queries(oracle, settings.probe_amplitude),
            "uniform": [oracle.oracle_query(u, enums.QueryMode.RAW_OUTPUT, with_power=False) for u in uniform],
            "training": [oracle.oracle_query(u, enums.QueryMode.RAW_OUTPUT, with_power=False) for u in images],
        }
        rows = []
        for kind, queries in query_sets.items():
            inputs, _ = recovery.stack_queries(queries, oracle.num_inputs)
            recovered = recovery.recover_weights_exact(queries, oracle.num_inputs)
            error = recovery.relative_recovery_error(recovered, oracle.conductance)
            rows.append((kind, len(queries), linalg_stats.numerical_rank(inputs), error))
            log.info("weights recovered", query_kind=kind, q=len(queries), relative_error=error)

        self.writer.write_csv("recovery.csv", RECOVERY_COLUMNS, rows,
                              "relative Frobenius error of the least-squares weight recovery per query kind")


def run_experiment(cfg: config.ExperimentConfig, progress: bool = False) -> RunManifest:
    """
    Runs the configured experiment and returns its manifest
    :param cfg: a validated configuration
    :param progress: show progress bars
    """
    return ExperimentRunner(cfg, progress).run()
