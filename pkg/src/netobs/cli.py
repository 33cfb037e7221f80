"""Command line entry point: ``netobs run|validate|version``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np
import yaml

from netobs import __version__
from netobs.config import OUTPUT_ENV, ConfigError, bundled_names, load, output_dir

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _seed_override(text: str) -> tuple[str, int]:
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed value must be an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netobs", description="Observability condition numbers for network dynamics.")
    sub = p.add_subparsers(dest="command", required=True)
    bundled = ", ".join(n[:-4] for n in bundled_names())

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help=f"config file, or a bundled name ({bundled})")
    run.add_argument("--output-dir", help=f"output directory (default: output.directory, else ${OUTPUT_ENV}/<name>)")
    run.add_argument("--threads", type=int, default=1, help="worker threads for independent trials")
    run.add_argument("--seed-override", action="append", type=_seed_override, default=[],
                     metavar="NAME=VALUE", help="replace one of the config seeds; may repeat")
    run.add_argument("--no-figures", action="store_true", help="write CSV outputs only")
    run.add_argument("-v", "--verbose", action="store_true")

    val = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    val.add_argument("config")
    val.add_argument("--seed-override", action="append", type=_seed_override, default=[], metavar="NAME=VALUE")
    val.add_argument("-q", "--quiet", action="store_true", help="only report problems")

    sub.add_parser("version", help="print the package version")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(f"netobs {__version__}")
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, path = load(args.config, dict(args.seed_override))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"netobs: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        if not args.quiet:
            print(yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None, width=100), end="")
        print(f"{path}: ok", file=sys.stderr)
        return EXIT_OK

    if args.threads < 1:
        print("netobs: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    from netobs.runner import NumericalFailure, run_config

    out = output_dir(cfg, path, args.output_dir)
    figures = cfg["output"]["figures"] and not args.no_figures
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            res = run_config(cfg, out, threads=args.threads, figures=figures, config_name=path.name)
    except NumericalFailure as exc:
        print(f"netobs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # raised while building the network, system or observation scheme
        print(f"netobs: invalid experiment: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in res.files + res.figures:
        print(f)
    print(out / "manifest.yaml")
    if res.failed:
        print(f"netobs: numerical failure: {res.failed} (partial outputs kept)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
