"""Command line: run, list, plotdata, compare."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import apply_overrides, load_config
from .experiments import ConfigError, default_config, registry

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SIMULATOR = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abcgan", description="ABC-GAN likelihood-free inference experiments")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="train one experiment and write a run directory")
    r.add_argument("--experiment", required=True)
    r.add_argument("--config", help="INI file overriding the experiment defaults")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--method", choices=("abcgan", "rejection"))
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. train.iterations=500 (repeatable)")
    r.add_argument("--log-every", type=int, default=0)
    sub.add_parser("list", help="list registered experiments")
    pd = sub.add_parser("plotdata", help="write per-figure CSVs for a run")
    pd.add_argument("--run", required=True)
    c = sub.add_parser("compare", help="tabulate metrics across runs")
    c.add_argument("--runs", nargs="+", required=True)
    return p


def _cmd_run(args) -> int:
    from .harness import run
    from .model import NonFiniteLoss
    from .autodiff import NonFiniteGradient
    from .simulators import SimulatorError
    try:
        cfg = load_config(args.config, args.experiment) if args.config else default_config(args.experiment)
        if args.method:
            cfg.method = args.method
        apply_overrides(cfg, args.set)
        cfg.validate()
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.log_every:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
        cfg_log = args.log_every
    else:
        cfg_log = 0
    try:
        result = run(cfg, args.seed, args.out, log_every=cfg_log)
    except (NonFiniteLoss, NonFiniteGradient, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except SimulatorError as err:
        print(f"simulator failure: {err}", file=sys.stderr)
        return EXIT_SIMULATOR
    rep = result.report
    means = ", ".join(f"{k}={v:.4g}" for k, v in rep["mean"].items())
    print(f"{rep['experiment']} seed {rep['seed']}: {means}  ({rep['wall_clock_s']:.1f} s) -> {result.directory}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "list":
        for exp in registry():
            cfg = exp.defaults()
            print(f"{exp.name:18s} d={exp.dim:<3d} iterations={cfg.train.iterations:<6d} {exp.description}")
        return EXIT_OK
    from .harness import RunError, compare, emit_plotdata
    try:
        if args.command == "plotdata":
            for path in emit_plotdata(args.run):
                print(path)
        else:
            print(compare(args.runs))
    except RunError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
