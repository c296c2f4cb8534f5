"""Command-line front end: ``run``, ``compare`` and ``verify``.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 numerical
divergence.  Flags override the config file, which overrides built-in
defaults.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, ScenarioConfig
from .controller import GainError, NonFiniteError
from .mathkit import ORACLE_SLACK
from .plots import trace_plots
from .sim import (
    VARIANTS,
    SimulationDiverged,
    StageError,
    VariantConfig,
    compare_variants,
    comparison_table,
    metrics,
    run_closed_loop,
)
from .verify import run_suites

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsebackstep", description="Simulate, compare and verify the adaptive backstepping tracking controller.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--config", type=Path, help="scenario JSON file")
        p.add_argument("--out-dir", type=Path, help="output directory (default ./out)")
        p.add_argument("--dt", type=float, help="integration step [s]")
        p.add_argument("--t-final", type=float, help="simulation horizon [s]")
        p.add_argument("--no-plots", action="store_true", help="skip the SVG figures")

    run = sub.add_parser("run", help="simulate one variant and write trace.csv plus SVG plots")
    scenario_flags(run)
    run.add_argument("--variant", help=f"one of {', '.join(VARIANTS)}")

    cmp_ = sub.add_parser("compare", help="run several variants from the same initial state")
    scenario_flags(cmp_)
    cmp_.add_argument("--variant", action="append", help="variant tag; repeat for each (default: all)")

    ver = sub.add_parser("verify", help="randomised oracle suites and the gradient check")
    ver.add_argument("--samples", type=int, default=100_000, help="draws per suite (default 100000)")
    ver.add_argument("--tolerance", type=float, default=ORACLE_SLACK,
                     help=f"absolute slack of the inequality suites (default {ORACLE_SLACK:g})")
    ver.add_argument("--seed", type=int, default=None, help="random seed")
    return parser


def _load(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    cfg = cfg.with_overrides(
        dt=args.dt,
        t_final=args.t_final,
        output_dir=str(args.out_dir) if args.out_dir is not None else None,
        plots=False if args.no_plots else None,
    )
    return cfg


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def cmd_run(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        cfg = _load(args)
        if args.variant is not None:
            cfg = cfg.with_overrides(variant=args.variant)
        sc = cfg.build()
    except (ConfigError, GainError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_closed_loop(sc.model, sc.reference, sc.controller, sc.variant)
    except SimulationDiverged as exc:
        exc.trace.write_csv(out_dir / "trace_partial.csv")
        print(f"error: {exc}; partial trace in {out_dir / 'trace_partial.csv'}", file=err)
        return EXIT_DIVERGED
    except (StageError, NonFiniteError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_DIVERGED
    trace.write_csv(out_dir / "trace.csv")
    written = ["trace.csv"]
    if cfg.plots:
        for name, svg in trace_plots(trace).items():
            _write(out_dir / name, svg)
            written.append(name)
    m = metrics(trace, threshold=cfg.settle_threshold)
    print(f"variant {cfg.variant}: " + ", ".join(f"{k}={v:.6g}" for k, v in m.items()), file=out)
    print(f"wrote {', '.join(written)} to {out_dir}", file=out)
    return EXIT_OK


def cmd_compare(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    try:
        cfg = _load(args)
        tags = tuple(args.variant) if args.variant else cfg.compare_variants
        unknown = [t for t in tags if t not in VARIANTS]
        if unknown:
            raise ConfigError(f"variant tags are among {', '.join(VARIANTS)}", f"unknown: {', '.join(unknown)}")
        if len(tags) < 2:
            raise ConfigError("compare needs at least two variants", f"got {len(tags)}")
        sc = cfg.build()
    except (ConfigError, GainError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INVALID
    variants = [VariantConfig(t, dt=cfg.dt, t_final=cfg.t_final, decimation=cfg.decimation) for t in tags]
    rows = compare_variants(sc.model, sc.reference, sc.controller, variants, eta0=sc.eta0,
                            threshold=cfg.settle_threshold)
    csv_text, text = comparison_table(rows)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "comparison.csv", csv_text)
    _write(out_dir / "comparison.txt", text)
    print(text, end="", file=out)
    failed = [r.variant for r in rows if not r.ok]
    if failed:
        print(f"error: variants failed: {', '.join(failed)}", file=err)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_verify(args, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    if args.samples < 1:
        print(f"error: --samples must be >= 1, got {args.samples}", file=err)
        return EXIT_INVALID
    if not args.tolerance >= 0:
        print(f"error: --tolerance must be >= 0, got {args.tolerance}", file=err)
        return EXIT_INVALID
    kw = {} if args.seed is None else {"seed": args.seed}
    results = run_suites(args.samples, args.tolerance, **kw)
    for r in results:
        print(r.line(), file=out)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"first counterexample ({failed[0].name}): {failed[0].counterexample}", file=out)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
