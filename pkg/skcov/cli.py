"""Command line interface."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .const import DEFAULT_SEED
from .disorder import dump_couplings, interaction_matrix, sample_couplings
from .enums import Engine, ExperimentKind
from .errors import ConfigError, ReportIOError, SkcovError
from .experiments import ExperimentConfig, run
from .gibbs_exact import exact_summary
from .helpers import parse_list
from .observables import tap_report

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FLAGS_FAILED = 1
EXIT_ERROR = 2

CHAIN_OPTIONS = {
    "sweeps": "sweeps",
    "burnin": "burn_in_sweeps",
    "replicas": "replicas",
    "thin": "thin",
    "ladder": "ladder",
}


def _experiment_options() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--n-list", help="comma separated system sizes")
    parser.add_argument("--beta-list", help="comma separated inverse temperatures")
    parser.add_argument("--samples", type=int, help="disorder instances per cell")
    parser.add_argument("--engine", choices=[engine.value for engine in Engine])
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", dest="out_dir", help="report directory")
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument(
        "--zero-diagonal",
        action="store_true",
        default=None,
        help="drop the diagonal couplings g_ii",
    )
    chain = parser.add_argument_group("markov chain")
    chain.add_argument("--sweeps", type=int)
    chain.add_argument("--burnin", type=int)
    chain.add_argument("--replicas", type=int)
    chain.add_argument("--thin", type=int)
    chain.add_argument("--ladder", help="comma separated tempering ladder")
    return parser


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser."""
    verbosity = argparse.ArgumentParser(add_help=False)
    verbosity.add_argument(
        "-v", "--verbose", action="count", default=0, help="more logging"
    )
    parser = argparse.ArgumentParser(
        prog="skcov",
        description="Covariance and TAP residual experiments for the SK model.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    options = _experiment_options()
    for kind in ExperimentKind:
        commands.add_parser(
            kind.value, parents=[options, verbosity], help=f"run the {kind.value} experiment"
        )
    dump = commands.add_parser(
        "dump", parents=[verbosity], help="dump one instance and its exact summary"
    )
    dump.add_argument("--n", type=int, required=True)
    dump.add_argument("--seed", type=int, default=DEFAULT_SEED)
    dump.add_argument("--beta", type=float, required=True)
    dump.add_argument("--out", type=Path, required=True)
    dump.add_argument("--four-point", action="store_true")
    return parser


def _read_config(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as ex:
        raise ConfigError(f"Could not read configuration {path}") from ex
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration {path} must be a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge a configuration file with command line overrides."""
    data = _read_config(args.config) if args.config is not None else {}
    data["kind"] = args.command
    if args.n_list is not None:
        data["n_list"] = parse_list(args.n_list, int)
    if args.beta_list is not None:
        data["beta_list"] = parse_list(args.beta_list, float)
    for name in ("samples", "engine", "seed", "out_dir", "zero_diagonal"):
        if (value := getattr(args, name)) is not None:
            data[name] = value
    chain = dict(data.get("chain") or {})
    for option, key in CHAIN_OPTIONS.items():
        if (value := getattr(args, option)) is not None:
            chain[key] = parse_list(value, float) if option == "ladder" else value
    if chain:
        data["chain"] = chain
    for required in ("n_list", "beta_list"):
        if required not in data:
            raise ConfigError(f"Missing {required}; pass --{required.replace('_', '-')}")
    return ExperimentConfig.from_dict(data)


def dump(n: int, seed: int, beta: float, out: Path, four_point: bool = False) -> Path:
    """Write couplings.bin, couplings.csv and summary.json for one instance."""
    couplings = sample_couplings(n, seed)
    summary = exact_summary(couplings, beta, want_four_point=four_point)
    try:
        out.mkdir(parents=True, exist_ok=True)
        dump_couplings(couplings, out / "couplings.bin")
        dump_couplings(couplings, out / "couplings.csv")
        data = summary.to_dict()
        data["seed"] = seed
        data["tap"] = tap_report(
            summary.c, interaction_matrix(couplings), beta, want_rows=False
        ).to_dict()
        (out / "summary.json").write_text(
            json.dumps(data, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as ex:
        raise ReportIOError(str(out)) from ex
    return out


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line interface and return the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose))
    try:
        if args.command == "dump":
            dump(args.n, args.seed, args.beta, args.out, args.four_point)
            _LOGGER.info("Wrote instance n=%s seed=%s to %s", args.n, args.seed, args.out)
            return EXIT_OK
        report = run(resolve_config(args))
    except SkcovError as ex:
        _LOGGER.error("%s", ex)
        return EXIT_ERROR
    for name, passed in sorted(report.flags.items()):
        _LOGGER.info("%s: %s", name, "pass" if passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FLAGS_FAILED


if __name__ == "__main__":
    sys.exit(main())
