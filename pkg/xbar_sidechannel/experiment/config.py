"""
This module contains the experiment configuration and its YAML loader.

A configuration file is a key/value tree mirroring ExperimentConfig; every omitted field takes its default.
Example:

    experiment: fig5_surrogate
    dataset: mnist
    seed: 7
    data_dir: data
    output_dir: out/fig5
    surrogate:
      lambdas: [0, 1e-4, 1e-3, 1e-2]
      query_counts: [100, 200, 400]
      modes: [raw_output]
"""
import dataclasses
import enum
import pathlib
import re
import typing

import yaml

import xbar_sidechannel.attacks.surrogate as surrogate
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.model as model


class ConfigLoader(yaml.SafeLoader):
    """
    A safe YAML loader that also reads exponent floats without a dot, such as 1e-4, as numbers
    """


ConfigLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?[0-9][0-9_]*(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


@dataclasses.dataclass(frozen=True)
class OracleTraining:
    """
    Oracle training hyperparameters. A missing learning rate takes the pairing default
    """
    epochs: int = 20
    batch_size: int = 128
    learning_rate: typing.Optional[float] = None

    def __post_init__(self):
        self.for_pairing(enums.Pairing.SOFTMAX_CE, 0)

    def for_pairing(self, pairing: enums.Pairing, seed: int) -> model.TrainConfig:
        """
        Returns the training configuration of one oracle
        :param pairing: the oracle pairing
        :param seed: the training seed
        """
        overrides = {"epochs": self.epochs, "batch_size": self.batch_size, "seed": seed}
        if self.learning_rate is not None:
            overrides["learning_rate"] = self.learning_rate
        return model.TrainConfig.for_pairing(pairing, **overrides)


@dataclasses.dataclass(frozen=True)
class Table1Settings:
    pairings: typing.Tuple[enums.Pairing, ...] = (enums.Pairing.LINEAR_MSE, enums.Pairing.SOFTMAX_CE)
    splits: typing.Tuple[enums.Split, ...] = (enums.Split.TRAIN, enums.Split.TEST)
    runs: int = 5


@dataclasses.dataclass(frozen=True)
class HeatmapSettings:
    pairings: typing.Tuple[enums.Pairing, ...] = (enums.Pairing.LINEAR_MSE, enums.Pairing.SOFTMAX_CE)


@dataclasses.dataclass(frozen=True)
class AttackSettings:
    """
    Pixel attack settings. An empty epsilon list means 21 evenly spaced strengths in [0, 1].
    exhaustive_samples test images get the exhaustive single-pixel search at the largest strength (0 disables it)
    """
    strategies: typing.Tuple[enums.PixelAttackStrategy, ...] = tuple(enums.PixelAttackStrategy)
    epsilons: typing.Tuple[float, ...] = ()
    n_pixels: typing.Tuple[int, ...] = (1, 2, 4, 8)
    runs: int = 5
    clip: bool = True
    exhaustive_samples: int = 100


@dataclasses.dataclass(frozen=True)
class SurrogateSettings:
    lambdas: typing.Tuple[float, ...] = surrogate.DEFAULT_LAMBDAS
    query_counts: typing.Tuple[int, ...] = surrogate.DEFAULT_QUERY_COUNTS
    modes: typing.Tuple[enums.QueryMode, ...] = (enums.QueryMode.RAW_OUTPUT, enums.QueryMode.LABEL_ONLY)
    runs: int = 10
    epsilon: float = 0.1
    oracle_pairing: enums.Pairing = enums.Pairing.LINEAR_MSE
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.05

    def __post_init__(self):
        self.train_config()

    def train_config(self) -> model.TrainConfig:
        return model.TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate)


@dataclasses.dataclass(frozen=True)
class RecoverySettings:
    """
    Recovery check settings. A missing query count means N, the number of inputs
    """
    query_count: typing.Optional[int] = None
    probe_amplitude: float = 1.0


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    experiment: enums.ExperimentName = enums.ExperimentName.TABLE1
    dataset: enums.DatasetName = enums.DatasetName.MNIST
    pairing: enums.Pairing = enums.Pairing.SOFTMAX_CE
    seed: int = 0
    data_dir: pathlib.Path = pathlib.Path("data")
    output_dir: pathlib.Path = pathlib.Path("out")
    jobs: int = 1
    noise_sigma: float = 0.0
    train: OracleTraining = OracleTraining()
    table1: Table1Settings = Table1Settings()
    heatmap: HeatmapSettings = HeatmapSettings()
    attack: AttackSettings = AttackSettings()
    surrogate: SurrogateSettings = SurrogateSettings()
    recovery: RecoverySettings = RecoverySettings()


def _enum_value(cls: typing.Type[enum.Enum], value: typing.Any, path: str) -> enum.Enum:
    for member in cls:
        if value == member.value or (isinstance(value, str) and value.lower() == member.name.lower()):
            return member
    raise errors.ConfigError(
        path, "unknown value {!r}; valid options: {}".format(value, ", ".join(str(m.value) for m in cls))
    )


def _convert(value: typing.Any, hint: typing.Any, path: str) -> typing.Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin is typing.Union:
        if value is None:
            return None
        return _convert(value, next(a for a in args if a is not type(None)), path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise errors.ConfigError(path, "expected a list, got {!r}".format(value))
        return tuple(_convert(item, args[0], "{}[{}]".format(path, i)) for i, item in enumerate(value))
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        return _enum_value(hint, value, path)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    if hint is bool:
        if not isinstance(value, bool):
            raise errors.ConfigError(path, "expected true or false, got {!r}".format(value))
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise errors.ConfigError(path, "expected an integer, got {!r}".format(value))
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise errors.ConfigError(path, "expected a number, got {!r}".format(value))
        return float(value)
    if hint is pathlib.Path:
        if not isinstance(value, str):
            raise errors.ConfigError(path, "expected a path, got {!r}".format(value))
        return pathlib.Path(value)
    return value


def _build(cls, data: typing.Any, path: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise errors.ConfigError(path or "<root>", "expected a mapping, got {!r}".format(data))

    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise errors.ConfigError(_join(path, key), "unknown field; valid fields: {}".format(", ".join(sorted(names))))

    kwargs = {key: _convert(value, hints[key], _join(path, key)) for key, value in data.items()}
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise errors.ConfigError(path or "<root>", str(e)) from e


def _join(path: str, key: typing.Any) -> str:
    return "{}.{}".format(path, key) if path else str(key)


def _line_index(node: yaml.Node, path: str = "", lines: typing.Optional[dict] = None) -> typing.Dict[str, int]:
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            child = _join(path, key_node.value)
            lines[child] = key_node.start_mark.line + 1
            _line_index(value_node, child, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            child = "{}[{}]".format(path, i)
            lines[child] = item.start_mark.line + 1
            _line_index(item, child, lines)
    return lines


def check_constraints(cfg: ExperimentConfig, check_paths: bool = True):
    """
    Checks the constraints that span several fields
    :param cfg: the configuration
    :param check_paths: also require the data directory to exist

    :raises ConfigError: naming the violated constraint
    """
    if cfg.jobs < 1:
        raise errors.ConfigError("jobs", "must be at least 1")
    if cfg.noise_sigma < 0:
        raise errors.ConfigError("noise_sigma", "must be non-negative")
    if cfg.experiment is enums.ExperimentName.FIG5_SURROGATE and 0.0 not in cfg.surrogate.lambdas:
        raise errors.ConfigError("surrogate.lambdas", "must include 0, the baseline without power information")
    if any(w < 0 for w in cfg.surrogate.lambdas):
        raise errors.ConfigError("surrogate.lambdas", "power loss weights must be non-negative")
    if any(q < 1 for q in cfg.surrogate.query_counts):
        raise errors.ConfigError("surrogate.query_counts", "every query count must be positive")
    for field, values in (("surrogate.lambdas", cfg.surrogate.lambdas), ("surrogate.query_counts", cfg.surrogate.query_counts),
                          ("attack.n_pixels", cfg.attack.n_pixels)):
        if len(set(values)) != len(values):
            raise errors.ConfigError(field, "contains repeated values")
    if cfg.surrogate.epsilon < 0:
        raise errors.ConfigError("surrogate.epsilon", "must be non-negative")
    if cfg.attack.exhaustive_samples < 0:
        raise errors.ConfigError("attack.exhaustive_samples", "must be non-negative")
    if any(n < 1 for n in cfg.attack.n_pixels):
        raise errors.ConfigError("attack.n_pixels", "every pixel count must be positive")
    eps = cfg.attack.epsilons
    if any(e < 0 for e in eps) or any(b < a for a, b in zip(eps, eps[1:])):
        raise errors.ConfigError("attack.epsilons", "must be non-negative and ascending")
    for field, runs in (("table1.runs", cfg.table1.runs), ("attack.runs", cfg.attack.runs),
                        ("surrogate.runs", cfg.surrogate.runs)):
        if runs < 1:
            raise errors.ConfigError(field, "must be at least 1")
    if check_paths and not cfg.data_dir.is_dir():
        raise errors.ConfigError("data_dir", "directory '{}' does not exist".format(cfg.data_dir))


def parse_config(text: str, overrides: typing.Optional[typing.Dict[str, typing.Any]] = None,
                 check_paths: bool = True) -> ExperimentConfig:
    """
    Parses a YAML configuration, fills defaults, applies overrides and checks every constraint
    :param text: the YAML document
    :param overrides: top-level fields to replace (e.g. from command line flags); None values are ignored
    :param check_paths: require the data directory to exist
    """
    try:
        node = yaml.compose(text, Loader=ConfigLoader)
        data = yaml.load(text, Loader=ConfigLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise errors.ConfigError("<file>", str(getattr(e, "problem", e)), mark.line + 1 if mark else None) from e

    lines = _line_index(node) if node is not None else {}
    if data is None:
        data = {}
    if isinstance(data, dict):
        data = dict(data)
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            data[key] = str(value) if isinstance(value, pathlib.Path) else value

    try:
        cfg = _build(ExperimentConfig, data)
        check_constraints(cfg, check_paths)
    except errors.ConfigError as e:
        if e.line is None and e.field in lines:
            raise errors.ConfigError(e.field, e.reason, lines[e.field]) from e
        raise
    return cfg


def validate_config(path: typing.Union[str, pathlib.Path],
                    overrides: typing.Optional[typing.Dict[str, typing.Any]] = None,
                    check_paths: bool = True) -> ExperimentConfig:
    """
    Reads and validates a configuration file
    :param path: the YAML file
    :param overrides: top-level fields to replace, see parse_config
    :param check_paths: require the data directory to exist
    """
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise errors.ConfigError("<file>", "can not read '{}': {}".format(path, e)) from e
    return parse_config(text, overrides, check_paths)


def _plain(value: typing.Any) -> typing.Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, pathlib.Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: ExperimentConfig) -> typing.Dict[str, typing.Any]:
    """
    Returns the configuration as plain data (enums as values, paths as strings)
    """
    return _plain(dataclasses.asdict(cfg))


def dump_config(cfg: ExperimentConfig) -> str:
    """
    Returns the fully populated configuration as YAML
    """
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
