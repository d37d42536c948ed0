"""Command-line entry point for running experiment grids."""

from __future__ import annotations

import argparse
import sys

from .algorithms import ALGORITHMS
from .errors import ConfigError, DataError, DivergedError, ProxnetError
from .harness import (
    Config,
    build_experiment,
    list_presets,
    load_config,
    load_preset,
    run_experiment,
)

_VALID_ALGO_HELP = ", ".join(ALGORITHMS) + ", unified:gt, unified:ed"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxnet",
        description="Simulate distributed stochastic proximal-gradient methods and record traces.",
    )
    parser.add_argument("--config", help="path to an INI experiment config")
    parser.add_argument("--preset", help="name of a shipped preset (see --list-presets)")
    parser.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    parser.add_argument("--algorithm", help=f"override algorithm(s); valid: {_VALID_ALGO_HELP}")
    parser.add_argument("--n", type=int, help="override agent count")
    parser.add_argument("--topology", help="override topology kind (ring|complete|star|file)")
    parser.add_argument("--K", type=int, dest="K", help="override iteration count")
    parser.add_argument("--seed", type=int, help="override first master seed")
    parser.add_argument("--seeds", type=int, help="override number of repeated seeds")
    parser.add_argument("--eval-every", type=int, help="override evaluation interval")
    parser.add_argument("--out", help="override output directory")
    return parser


def _apply_overrides(cfg: Config, args) -> Config:
    sections = {name: dict(keys) for name, keys in cfg.sections.items()}
    if args.algorithm is not None:
        sections["run"]["algorithm"] = args.algorithm
    if args.K is not None:
        sections["run"]["k"] = str(args.K)
    if args.seed is not None:
        sections["run"]["seed"] = str(args.seed)
    if args.seeds is not None:
        sections["run"]["seeds"] = str(args.seeds)
    if args.eval_every is not None:
        sections["run"]["eval_every"] = str(args.eval_every)
    if args.out is not None:
        sections["run"]["out"] = args.out
    if args.n is not None:
        sections["topology"]["n"] = str(args.n)
    if args.topology is not None:
        sections["topology"]["kind"] = args.topology
    return Config(sections)


def cli_run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.list_presets:
        for name in list_presets():
            print(name)
        return 0

    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.preset:
            cfg = load_preset(args.preset)
        else:
            cfg = Config({})
        cfg = _apply_overrides(cfg, args)
        spec = build_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    def progress(algo, seed, record):
        print(f"{algo} seed={seed}: final stationarity {record.stationarity[-1]:.6e} "
              f"({record.seconds[-1]:.2f}s)")

    try:
        aggregates = run_experiment(spec, progress=progress)
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ProxnetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for algo, path in aggregates.items():
        print(f"{algo}: wrote {path}")
    return 0


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
