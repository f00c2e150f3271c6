"""Command-line entry point: ``smrs run | solve | check``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .grid import ChannelConfig, bin_count, check_unique_columns
from .harness.experiment import ConfigError, run_sweep
from .harness.io import format_spectrum, load_config, parse_channels, read_spectra
from .pipeline import reconstruct
from .solver import SolveConfig
from .support import DetectorConfig, NoSignalDetected

EXIT_CONFIG = 2
EXIT_FAILURE = 1


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.full_scale:
        cfg = replace(cfg, delta_f=5e6, trials=1000)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    def progress(done, total):
        if done % 50 == 0 or done == total:
            print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    result = run_sweep(cfg, workers=args.workers, progress=None if args.quiet else progress)
    if not args.quiet:
        print(file=sys.stderr)
    (out / "results.csv").write_text(result.csv_text())
    (out / "trials.json").write_text(result.json_text())
    (out / "timing.csv").write_text(result.timing_csv_text())
    sys.stdout.write(result.csv_text())
    return 0


def _cmd_solve(args) -> int:
    samples, m_total = read_spectra(args.input)
    rates = parse_channels(args.channels)
    got = [s.config.rate for s in samples]
    if len(rates) != len(got) or any(abs(a - b) > 1e-6 * b for a, b in zip(rates, got)):
        raise ConfigError(f"--channels {rates} do not match the file's channel rates {got}")
    detector = DetectorConfig(mode="noisy" if args.noisy else "noiseless",
                              widen_fraction=args.widen)
    solver_cfg = SolveConfig(noisy_mode=args.noisy)
    try:
        rep = reconstruct(samples, m_total, detector, solver_cfg)
    except NoSignalDetected as exc:
        print(f"no signal detected: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    text = format_spectrum(rep.spectrum, args.tolerance)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(json.dumps(rep.summary()), file=sys.stderr)
    return 0 if rep.converged else EXIT_FAILURE


def _cmd_check(args) -> int:
    rates = parse_channels(args.channels)
    try:
        channels = [ChannelConfig.from_rate(r, args.delta_f) for r in rates]
        m_total = bin_count(args.fmax, args.delta_f)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    verdict = check_unique_columns(channels, m_total)
    span = verdict.lcm * args.delta_f
    print(json.dumps({
        "ok": verdict.ok,
        "m_values": [c.m_i for c in channels],
        "lcm_bins": verdict.lcm,
        "unique_span_hz": span,
        "max_supported_bins": verdict.max_supported_bins,
        "f_max_bins": m_total,
        "duplicate_columns": verdict.duplicate_columns,
    }))
    return 0 if verdict.ok else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smrs", description=(
        "Sparse multiband reconstruction from synchronized multirate samples."))
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte-Carlo sweep from a YAML config")
    run.add_argument("--config", required=True)
    run.add_argument("--output", default="results", help="directory for results.csv / trials.json")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--full-scale", action="store_true",
                     help="5 MHz resolution and 1000 trials per point")
    run.add_argument("--quiet", action="store_true")
    run.set_defaults(func=_cmd_run)

    solve = sub.add_parser("solve", help="reconstruct one spectrum from a spectra file")
    solve.add_argument("--channels", required=True, help="comma-separated rates in Hz")
    solve.add_argument("--input", required=True)
    solve.add_argument("--output")
    solve.add_argument("--noisy", action="store_true", help="energy detector and noisy block OMP")
    solve.add_argument("--widen", type=float, default=0.0, help="support widening fraction")
    solve.add_argument("--tolerance", type=float, default=0.0,
                       help="only print bins with |X| above this")
    solve.set_defaults(func=_cmd_solve)

    check = sub.add_parser("check", help="column-uniqueness (lcm) check")
    check.add_argument("--channels", required=True, help="comma-separated rates in Hz")
    check.add_argument("--fmax", type=float, required=True, help="grid span in Hz")
    check.add_argument("--delta-f", type=float, default=5e6)
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
