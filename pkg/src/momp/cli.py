"""Command-line entry point.

    momp run CONFIG [--output DIR] [--workers N]
    momp validate CONFIG
    momp presets [NAME]

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from momp.config import PRESETS, load_config, to_ini, user_positions
from momp.errors import ConfigError, MompError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

logger = logging.getLogger("momp")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momp", description="MOMP channel estimation and localization experiments")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV tables")
    run.add_argument("config")
    run.add_argument("--output", help="override [output] directory")
    run.add_argument("--workers", type=int, help="override [output] workers")

    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")

    pre = sub.add_parser("presets", help="list presets or print one as a config file")
    pre.add_argument("name", nargs="?", choices=sorted(PRESETS))
    return p


def _cmd_run(args) -> int:
    import dataclasses

    from momp.experiment import run_experiment

    cfg = load_config(args.config)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, workers=args.workers))
    result = run_experiment(cfg, args.output)
    print(f"wrote {len(result.files)} files to {result.directory}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from momp.experiment import _check_positions

    cfg = load_config(args.config)
    users = user_positions(cfg)
    _check_positions(cfg, users)
    print(f"ok: {len(users)} positions x {len(cfg.sweep_points())} sweep points")
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.name:
        sys.stdout.write(to_ini(PRESETS[args.name]()))
        return EXIT_OK
    for name, factory in sorted(PRESETS.items()):
        doc = (factory.__doc__ or "").strip().splitlines()[0]
        print(f"{name:11s} {doc}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "validate": _cmd_validate, "presets": _cmd_presets}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MompError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
