"""Command line entry points.

Four subcommands: ``run`` executes a learning-curve experiment,
``variance-check`` validates the estimator covariance laws by Monte
Carlo, ``encode-search`` runs the sensor-projection search on a
generated problem, and ``schema-check`` validates the files of an
output directory.

Exit codes: 0 success, 1 a check ran and failed its threshold,
2 configuration error (unparseable config, unknown or missing keys,
bad values, unusable output directory), 3 unexpected runtime failure.

The output directory is taken from ``--out`` when given, else the
config key ``output.dir``, else the ``SENSORGRAD_OUT`` environment
variable, else ``sensorgrad_out`` under the working directory.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import Config, ConfigError, load_config
from .experiments import (
    encode_search_experiment,
    run_experiment,
    schema_check,
    variance_check_experiment,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_OUT_ENV = "SENSORGRAD_OUT"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorgrad",
        description="Policy-gradient experiments with sensor-based "
        "variance reduction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, threads=False):
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        if threads:
            p.add_argument(
                "--threads",
                type=int,
                default=1,
                help="worker threads for scheduling runs; results are "
                "identical at any value",
            )

    add_config_args(
        sub.add_parser("run", help="run a learning-curve experiment"),
        threads=True,
    )
    add_config_args(
        sub.add_parser(
            "variance-check", help="validate the estimator covariance laws"
        )
    )
    add_config_args(
        sub.add_parser("encode-search", help="search for a sensor projection")
    )
    check = sub.add_parser(
        "schema-check", help="validate the files of an output directory"
    )
    check.add_argument("--out", help="output directory to validate")
    return parser


def _load_config(args) -> Config:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_value("seed", int(args.seed))
    if not cfg.has("seed"):
        raise ConfigError(
            f"{cfg.source}: missing required key 'seed' (set it in the "
            "config or pass --seed)"
        )
    return cfg


def _resolve_out_dir(args, cfg: Config | None):
    if getattr(args, "out", None):
        return args.out
    if cfg is not None and cfg.has("output.dir"):
        return cfg.get_str("output.dir")
    env = os.environ.get(_OUT_ENV)
    if env:
        return env
    return "sensorgrad_out"


def _cmd_run(args) -> int:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = _load_config(args)
    out_dir = _resolve_out_dir(args, cfg)
    paths = run_experiment(cfg, out_dir, threads=args.threads)
    print(f"config hash {cfg.hash()}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_variance_check(args) -> int:
    cfg = _load_config(args)
    out_dir = _resolve_out_dir(args, cfg)
    lines, ok, paths = variance_check_experiment(cfg, out_dir)
    for line in lines:
        print(line)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_THRESHOLD


def _cmd_encode_search(args) -> int:
    cfg = _load_config(args)
    out_dir = _resolve_out_dir(args, cfg)
    lines, ok, paths = encode_search_experiment(cfg, out_dir)
    for line in lines:
        print(line)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_THRESHOLD


def _cmd_schema_check(args) -> int:
    out_dir = _resolve_out_dir(args, None)
    lines, ok = schema_check(out_dir)
    for line in lines:
        print(line)
    return EXIT_OK if ok else EXIT_THRESHOLD


_COMMANDS = {
    "run": _cmd_run,
    "variance-check": _cmd_variance_check,
    "encode-search": _cmd_encode_search,
    "schema-check": _cmd_schema_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
