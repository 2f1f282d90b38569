"""Command-line front end: ``lab run``, ``lab validate`` and ``lab families``."""

from __future__ import annotations

import argparse
import logging
import sys

from .bernstein import FAMILIES, from_config
from .config import DEFAULT_FAMILIES, ConfigError, HypothesisViolation, load_config
from .experiments import CONFIG_EXIT, run_experiment
from .montecarlo import MissingDensity, SubordinatorStepper

log = logging.getLogger("tanglab")


def _load(path, seed=None, workers=None, out=None):
    cfg = load_config(path)
    if seed is not None:
        cfg.mc.seed = seed
    if workers is not None:
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.mc.workers = workers
    if out is not None:
        cfg.output = out
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args.seed, args.workers, args.out)
        rep = run_experiment(cfg)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    path = rep.write(cfg.output_dir())
    for c in rep.checks:
        print(f"{c.verdict:13s} {c.name}  [{c.test}]")
    print(f"overall: {rep.overall}  ({path})")
    return rep.exit_code


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    mode = " (counterexample mode)" if cfg.counterexample else ""
    print(f"ok: {cfg.experiment}{mode}, output {cfg.output_dir()}")
    return 0


def cmd_families(args) -> int:
    for spec in DEFAULT_FAMILIES:
        info = FAMILIES[spec["family"]]
        try:
            sampler = SubordinatorStepper(from_config(spec)).mode
        except MissingDensity:
            sampler = "none"
        print(f"{info.tag:24s} {info.formula:45s} {info.ranges:48s} {info.dim_constraint:9s} {sampler}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default: $LAB_OUTPUT_ROOT/<name>-<experiment>)")
    run.add_argument("--workers", type=int)
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="load and check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    fam = sub.add_parser("families", help="list built-in Bernstein families")
    fam.set_defaults(func=cmd_families)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
