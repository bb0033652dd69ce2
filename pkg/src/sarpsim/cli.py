"""Command-line entry point: ``gen-errors``, ``run``, ``sweep`` and ``report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .broadcast import write_error_file
from .config import HarnessConfig, load_config, parse_seeds
from .engine import error_file_for_seed
from .errors import ConfigError, SarpSimError
from .harness import ExperimentMatrix, RunFailure, aggregate_sweep, run_one, run_sweep
from .sarp import RecoveryMode

log = logging.getLogger("sarpsim")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI experiment configuration")
    p.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarpsim", description="Broadcast + unicast recovery streaming simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-errors", help="write uniform-loss error files, one per seed")
    g.add_argument("--segments", type=int, required=True)
    g.add_argument("--fraction", type=float, required=True)
    g.add_argument("--seeds", default="1..10")
    g.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("run", help="execute one scenario")
    _add_common(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=[m.value for m in RecoveryMode])
    bw = r.add_mutually_exclusive_group()
    bw.add_argument("--bw", help="constant bandwidth in bit/s, or profile:A / profile:B")
    bw.add_argument("--bw-trace", type=Path, help="CSV bandwidth trace (time_s,bandwidth_bps)")

    s = sub.add_parser("sweep", help="execute the bandwidth x seed x mode matrix")
    _add_common(s)
    s.add_argument("--seeds", help="seed list such as 1..10")
    s.add_argument("--mode", choices=[m.value for m in RecoveryMode], help="restrict to one mode")
    s.add_argument("--bw", action="append", help="bandwidth setting; repeat to list several")
    s.add_argument("--bw-trace", type=Path, action="append", help="trace file; repeatable")
    s.add_argument("--jobs", type=int)

    rep = sub.add_parser("report", help="aggregate a sweep and emit plots")
    rep.add_argument("sweep_dir", type=Path)
    rep.add_argument("--out", type=Path, help="defaults to <sweep_dir>/report")
    rep.add_argument("--confidence", type=float, default=0.90)
    return parser


def _bw_tokens(bws, traces) -> list[str] | None:
    tokens = list(bws or []) + [f"trace:{p.resolve()}" for p in (traces or [])]
    return tokens or None


def _validate_bw(config: HarnessConfig, tokens: list[str], key: str) -> None:
    for token in tokens:
        try:
            config.bandwidth(token)
        except (ValueError, OSError) as exc:
            raise ConfigError(key, str(exc)) from None


def cmd_gen_errors(args) -> int:
    try:
        seeds = parse_seeds(args.seeds)
    except ValueError as exc:
        raise ConfigError("--seeds", str(exc)) from None
    if args.segments < 1:
        raise ConfigError("--segments", "must be >= 1")
    if not 0.0 <= args.fraction <= 1.0:
        raise ConfigError("--fraction", "must be in [0, 1]")
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in seeds:
        ef = error_file_for_seed(args.segments, args.fraction, seed)
        write_error_file(ef, args.out / f"errors_seed_{seed}.txt")
    print(f"wrote {len(seeds)} error files to {args.out}")
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config)
    token = _bw_tokens([args.bw] if args.bw else None, [args.bw_trace] if args.bw_trace else None)
    if token:
        _validate_bw(config, token, "--bw-trace" if args.bw_trace else "--bw")
    seed = args.seed if args.seed is not None else config.get("run", "seed")
    mode = args.mode or config.get("recovery", "mode").value
    run_id = f"{mode}/seed_{seed}"
    try:
        summary = run_one(config, args.out, seed=seed, mode=mode, bandwidth_token=token[0] if token else None)
    except SarpSimError as exc:
        raise RunFailure(run_id, exc) from exc
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.seeds:
        try:
            config = config.with_override("sweep", "seeds", parse_seeds(args.seeds))
        except ValueError as exc:
            raise ConfigError("--seeds", str(exc)) from None
    if args.mode:
        config = config.with_override("sweep", "modes", (RecoveryMode(args.mode),))
    tokens = _bw_tokens(args.bw, args.bw_trace)
    if tokens:
        _validate_bw(config, tokens, "--bw")
    jobs = args.jobs if args.jobs is not None else config.get("run", "jobs")
    if jobs < 1:
        raise ConfigError("--jobs", "must be >= 1")
    matrix = ExperimentMatrix.from_config(config, args.out, tokens)
    results = run_sweep(matrix, jobs=jobs)
    print(f"completed {len(results)} runs in {args.out}")
    return 0


def cmd_report(args) -> int:
    from .plots import emit_plots

    if not 0.0 <= args.confidence < 1.0:
        raise ConfigError("--confidence", "must be in [0, 1)")
    out = args.out or args.sweep_dir / "report"
    try:
        aggregates, report = aggregate_sweep(args.sweep_dir, args.confidence)
    except ValueError as exc:
        raise ConfigError("sweep_dir", str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for path in emit_plots(aggregates, out):
        print(path)
    return 0


COMMANDS = {"gen-errors": cmd_gen_errors, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: invalid configuration key '{exc.key}': {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SarpSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
