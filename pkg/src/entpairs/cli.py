"""Command-line front end.

Subcommands ``steady``, ``evolve``, ``spectrum``, ``optimize-detuning`` and
``disorder`` read a JSON scenario (``--config``); ``figure NAME`` runs a
named preset.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 steady state not certified unique.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .dynamics import IntegrationError
from .liouvillian import DimensionError, SolverError
from .models import SpecError
from .presets import PRESETS, preset_tasks
from .scenario import SCHEMAS, ConfigError, ScenarioConfig, Table, execute, with_seed

OUT_ENV = "ENTPAIRS_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INDETERMINATE = 0, 2, 3, 4

log = logging.getLogger("entpairs")

COMMANDS = ("steady", "evolve", "spectrum", "optimize-detuning", "disorder")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario JSON file")
    common.add_argument("--out", type=Path, default=None,
                        help=f"output directory (default: ${OUT_ENV} or ./entpairs_out)")
    common.add_argument("--seed", type=int, default=None, help="override disorder/trajectory seed")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--tol-null", type=float, default=None,
                        help="null-eigenvalue threshold (default 1e-8 kappa)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="entpairs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    fig = sub.add_parser("figure", parents=[common])
    fig.add_argument("name", help="preset name: " + ", ".join(PRESETS))
    fig.add_argument("--include-long", action="store_true", help="also run long-running cases")
    return p


def output_dir(arg: Optional[Path]) -> Path:
    if arg is not None:
        return arg
    return Path(os.environ.get(OUT_ENV, "entpairs_out"))


def _run_command(args) -> int:
    if args.config is None:
        raise ConfigError(f"{args.command} needs --config")
    cfg = with_seed(ScenarioConfig.load(args.config), args.seed)
    summary = execute(args.command, cfg, output_dir(args.out), args.threads, args.tol_null)
    for f in summary["files"]:
        print(f)
    if args.command == "optimize-detuning":
        print(f"delta_star = {summary['result']!r}")
    return EXIT_INDETERMINATE if summary.get("indeterminate") else EXIT_OK


def _run_figure(args) -> int:
    if args.name not in PRESETS:
        raise ConfigError(f"unknown preset {args.name!r}; known: {', '.join(PRESETS)}")
    out = output_dir(args.out) / args.name
    code = EXIT_OK
    results = {}
    for task in preset_tasks(args.name, args.include_long):
        cfg = with_seed(task.scenario, args.seed)
        cfg = replace(cfg, output_path=f"{task.label}.csv")
        log.info("%s: %s", args.name, task.label)
        summary = execute(task.command, cfg, out, args.threads, args.tol_null)
        results[task.label] = summary
        for f in summary["files"]:
            print(f)
        if summary.get("indeterminate"):
            code = EXIT_INDETERMINATE
    for path in combine_figure(args.name, results, out):
        print(path)
    return code


def combine_figure(name: str, results: dict, out: Path) -> list[str]:
    """Panel-level tables assembled from the per-task outputs."""
    written = []
    if name == "fig4a":
        labels = [k for k in results if k.startswith("steady_gamma=")]
        first = results[labels[0]]["result"]
        cols = ["n_bar"] + [f"C_1_-1_gamma={l.split('=')[1]}" for l in labels]
        t = Table("entpairs.fig4a/1", cols)
        for i, nb in enumerate(first.values):
            t.rows.append([nb] + [results[l]["result"].concurrence[i][0] for l in labels])
        written += [str(p) for p in t.write(out / "table.csv", "figure", None, {"preset": name})]
    if name == "fig12":
        t = Table("entpairs.fig12/1", ["N", "j", "concurrence"])
        for label, summary in results.items():
            if not label.endswith("_steady"):
                continue
            N = int(label.split("_")[0].split("=")[1])
            res = summary["result"]
            for (a, _), c in zip(res.pairs, res.concurrence[0]):
                t.rows.append([N, a, c])
        written += [str(p) for p in t.write(out / "pairs.csv", "figure", None, {"preset": name})]
    return written


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "figure":
            return _run_figure(args)
        return _run_command(args)
    except (ConfigError, SpecError, DimensionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, IntegrationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


__all__ = ["main", "build_parser", "SCHEMAS"]
