from xbar_sidechannel.experiment.config import ExperimentConfig, validate_config, parse_config, dump_config     # noqa
from xbar_sidechannel.experiment.runner import RunManifest, run_experiment      # noqa
