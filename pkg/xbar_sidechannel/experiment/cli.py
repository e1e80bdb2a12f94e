"""
This module contains the command line interface.

    python -m xbar_sidechannel run config.yaml --seed 3 --data-dir data --out out/run3 --jobs 4
    python -m xbar_sidechannel validate config.yaml --print-config

Exit codes: 0 success, 1 unexpected error, 2 configuration, 3 dataset, 4 numerical, 5 artifact writing
"""
import argparse
import logging
import sys
import typing

import structlog

import xbar_sidechannel
import xbar_sidechannel.errors as errors
import xbar_sidechannel.experiment.config as config
import xbar_sidechannel.experiment.runner as runner

log = structlog.get_logger()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xbar_sidechannel",
        description="Power side-channel experiments on simulated memristive crossbars",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + xbar_sidechannel.__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    for name, description in (("run", "run the configured experiment"),
                              ("validate", "check a configuration file without running it")):
        command = commands.add_parser(name, help=description, description=description)
        command.add_argument("config", help="the YAML configuration file")
        command.add_argument("--seed", type=int, help="override the master seed")
        command.add_argument("--data-dir", help="override the directory holding the datasets")
        command.add_argument("--out", help="override the output directory")
        command.add_argument("--jobs", type=int, help="override the number of worker threads")
        command.add_argument("--print-config", action="store_true",
                             help="print the fully populated configuration as YAML")
        command.add_argument("-v", "--verbose", action="store_true", help="log debug events")
        command.add_argument("-q", "--quiet", action="store_true", help="hide progress bars")
    return parser


def configure_logging(verbose: bool):
    structlog.configure(
        wrapper_class=structlog.make_filtering_bound_logger(logging.DEBUG if verbose else logging.INFO),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
    )


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    """
    Runs the command line and returns the exit code
    :param argv: the arguments, defaults to sys.argv[1:]
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    overrides = {"seed": args.seed, "data_dir": args.data_dir, "output_dir": args.out, "jobs": args.jobs}

    try:
        cfg = config.validate_config(args.config, overrides)
        if args.print_config:
            sys.stdout.write(config.dump_config(cfg))
        if args.command == "validate":
            log.info("configuration valid", path=args.config, experiment=cfg.experiment.value)
            return 0
        manifest = runner.run_experiment(cfg, progress=not args.quiet)
    except errors.XbarError as e:
        log.error("run failed", error=type(e).__name__, message=str(e), exit_code=e.exit_code)
        return e.exit_code
    except Exception as e:
        log.exception("unexpected failure", error=type(e).__name__)
        return errors.XbarError.exit_code

    log.info("artifacts written", output_dir=str(cfg.output_dir), files=len(manifest.artifacts) + 1)
    return 0
