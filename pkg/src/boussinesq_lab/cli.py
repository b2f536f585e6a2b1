"""Command-line entry point: ``boussinesq-lab <subcommand> [--config FILE] [--out DIR]``.

Exit codes: 0 when every check of the subcommand passes, 1 when a check
fails, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import logging
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, load_config, make_config, parse_yaml

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2

COMMANDS = {
    "build-data": experiments.build_data,
    "linear": experiments.linear,
    "simulate": experiments.simulate,
    "verify": experiments.verify,
    "sweep": experiments.sweep,
}


def _parse_set(items: list[str]) -> dict:
    """Turn ``--set simulate.t_end=5`` pairs into a nested override mapping."""
    out: dict = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = parse_yaml(value)
    return out


def _deep_update(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boussinesq-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="YAML config file (defaults apply without one)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. simulate.t_end=5 (repeatable)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.set:
            cfg = make_config(_deep_update(copy.deepcopy(cfg.raw), _parse_set(args.set)))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        summary, ok = COMMANDS[args.command](cfg, args.out)
    except ValueError as exc:
        # invalid data/grid combinations surface while building the problem
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for key, value in summary.items():
        print(f"{key} = {value}")
    print(f"result = {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
