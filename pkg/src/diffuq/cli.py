"""Command line entry point.

    diffuq run CONFIG [-o DIR]
    diffuq sweep CONFIG --grid key=v1,v2 [--grid ...] [-o ROOT]
    diffuq report DIR [DIR ...] [-o CSV]
    diffuq sample CHECKPOINT -n N [-o CSV] [--seed S]
    diffuq selftest

Exit codes: 0 success, 2 bad config or usage, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .baselines import SampleBank
from .errors import CheckpointError, ConfigError, DataError, DiffuqError
from .harness import emit_report, run_experiment, run_sweep, selftest
from .sampler import load_checkpoint, sample

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffuq",
        description="Posterior sampling and calibration for regression "
                    "uncertainty.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("-o", "--out", default=None,
                       help="output directory (default: runs/<name>)")
    p_run.add_argument("--set", action="append", default=[], metavar="K=V",
                       dest="overrides",
                       help="override a config key, e.g. --set seed=3")

    p_sweep = sub.add_parser("sweep", help="grid of runs over config values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--grid", action="append", default=[],
                         metavar="KEY=V1,V2", required=True,
                         help="axis of the sweep; repeat for a product")
    p_sweep.add_argument("-o", "--out", default=None,
                         help="root directory (default: sweeps/<name>)")

    p_rep = sub.add_parser("report", help="summarize finished run dirs")
    p_rep.add_argument("dirs", nargs="+", metavar="DIR")
    p_rep.add_argument("-o", "--out", default=None,
                       help="also write the summary as CSV")

    p_samp = sub.add_parser("sample",
                            help="draw from a trained drift checkpoint")
    p_samp.add_argument("checkpoint")
    p_samp.add_argument("-n", "--num", type=int, required=True,
                        help="number of draws")
    p_samp.add_argument("-o", "--out", default=None,
                        help="write draws as CSV (default: stdout)")
    p_samp.add_argument("--seed", type=int, default=None,
                        help="override the checkpoint's sampling seed")

    sub.add_parser("selftest", help="quick built-in sanity checks")
    return parser


def _parse_grid(specs: list[str]) -> dict:
    grid = {}
    for spec in specs:
        key, eq, values = spec.partition("=")
        if not eq or not key or not values:
            raise ConfigError(f"--grid expects KEY=V1,V2,... got {spec!r}")
        parsed = []
        for raw in values.split(","):
            try:
                parsed.append(json.loads(raw))
            except json.JSONDecodeError:
                parsed.append(raw)
        grid[key] = parsed
    return grid


def _cmd_run(args) -> int:
    from .config import apply_overrides, load_config
    config = load_config(args.config)
    if args.overrides:
        config = load_config(apply_overrides(config.to_dict(), args.overrides))
    out = Path(args.out) if args.out else Path("runs") / config.name
    result = run_experiment(config, out)
    r = result.report
    print(f"{config.name}: method={config.method} n={len(result.bank)} "
          f"nll={r.nll:.4f} ece={r.ece:.4f} -> {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .config import load_config
    config = load_config(args.config)
    grid = _parse_grid(args.grid)
    out = Path(args.out) if args.out else Path("sweeps") / config.name
    results = run_sweep(config, grid, out)
    print(f"{len(results)} runs -> {out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = emit_report(args.dirs, args.out)
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        r2 = "nan" if r["r2"] != r["r2"] else f"{r['r2']:.4f}"
        print(f"{r['name']:<{width}}  {r['method']:<10} "
              f"nll={r['nll']:9.4f}  ece={r['ece']:.4f}  "
              f"mce={r['mce']:.4f}  r2={r2}")
    if args.out:
        print(f"summary -> {args.out}")
    return EXIT_OK


def _cmd_sample(args) -> int:
    if args.num <= 0:
        raise ConfigError(f"-n must be positive, got {args.num}")
    drift, sde = load_checkpoint(args.checkpoint)
    if args.seed is not None:
        sde = dataclasses.replace(sde, seed=args.seed)
    draws = sample(drift, sde, args.num)
    if args.out:
        SampleBank(draws, method="diffuq",
                   meta={"checkpoint": str(args.checkpoint),
                         "seed": sde.seed}).save_csv(args.out)
        print(f"{args.num} draws -> {args.out}")
    else:
        for row in draws:
            print(",".join(repr(float(v)) for v in row))
    return EXIT_OK


def _cmd_selftest(args) -> int:
    ok, lines = selftest()
    for line in lines:
        print(line)
    return EXIT_OK if ok else EXIT_RUNTIME


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "report": _cmd_report,
             "sample": _cmd_sample, "selftest": _cmd_selftest}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, CheckpointError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DiffuqError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
