"""Command-line entry point.

Bandwidth in trace files is in Mbps, one value per 1-second slot, converted at
1 Mbps = 125000 bytes per slot. Exit codes: 0 success, 2 invalid input or
parameters, 3 simulation failure (or, for ``oracle-check``, a constant-bitrate
instance on which the scan misses the optimum).
"""

import argparse
import json
import os
import sys
from pathlib import Path

from annalist.annalist import Annalist

from fastscan import __version__, data_sources
from fastscan.baselines import ALGORITHMS, BaselineParams
from fastscan.model import BYTES_PER_MBPS, WindowContext
from fastscan.oracle import enumerate_optimal
from fastscan.qoe import QoEParams, score
from fastscan.scanner import fastscan_window
from fastscan.simulator import (
    DEFAULTS,
    PREDICTOR_CHOICES,
    SessionConfig,
    run_comparison,
    run_session,
)

STREAM_FORMAT = "%(function_name)s | %(algorithm)s"
SEED_VARIABLE = "FASTSCAN_SEED"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILED = 3


def _session_flags(parser):
    parser.add_argument("--window", type=int, default=DEFAULTS["window"])
    parser.add_argument("--eta", type=int, default=DEFAULTS["eta"])
    parser.add_argument("--beta", type=float, default=DEFAULTS["beta"])
    parser.add_argument(
        "--lambda", dest="lam", type=float, default=DEFAULTS["lam"]
    )
    parser.add_argument(
        "--buffer",
        dest="buffer_cap_s",
        type=float,
        default=DEFAULTS["buffer_cap_s"],
        help="Buffer cap in seconds.",
    )
    parser.add_argument(
        "--threshold",
        dest="low_buffer_threshold_s",
        type=float,
        default=DEFAULTS["low_buffer_threshold_s"],
        help="Low-buffer fallback threshold in seconds.",
    )
    parser.add_argument(
        "--predictor", choices=PREDICTOR_CHOICES, default=DEFAULTS["predictor"]
    )
    parser.add_argument(
        "--prediction-scale",
        dest="prediction_scale",
        type=float,
        default=DEFAULTS["prediction_scale"],
    )
    parser.add_argument(
        "--bba-reservoir",
        dest="bba_reservoir_s",
        type=float,
        default=None,
        help="BBA reservoir in seconds. Default: the smaller of 10 and a third "
        "of the buffer.",
    )
    parser.add_argument(
        "--bba-cushion",
        dest="bba_cushion_s",
        type=float,
        default=None,
        help="BBA cushion in seconds, at most the buffer. Default: the smaller "
        "of 30 and the buffer.",
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``fastscan`` command."""
    parser = argparse.ArgumentParser(
        prog="fastscan",
        description=(
            "Adaptive bitrate decisions by forward and backward scans. Traces "
            f"are Mbps per second, 1 Mbps = {BYTES_PER_MBPS} bytes per slot."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--logfile", default=None, help="Also log to this file.")
    parser.add_argument("--analyst", default="fastscan", help="Analyst name in logs.")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Play a manifest over a trace.")
    simulate.add_argument("manifest")
    simulate.add_argument("trace")
    simulate.add_argument("--algo", choices=ALGORITHMS, default=DEFAULTS["algorithm"])
    simulate.add_argument("--out", default="session", help="Output path prefix.")
    _session_flags(simulate)

    compare = commands.add_parser("compare", help="Compare algorithms on traces.")
    compare.add_argument("manifest")
    compare.add_argument("trace_dir")
    compare.add_argument(
        "--algos",
        default=",".join(ALGORITHMS),
        help="Comma-separated algorithms.",
    )
    compare.add_argument("--reference", default="fastscan")
    compare.add_argument("--out", default="comparison", help="Output path prefix.")
    _session_flags(compare)

    oracle = commands.add_parser(
        "oracle-check", help="Compare the scan with exhaustive search."
    )
    oracle.add_argument("manifest")
    oracle.add_argument("trace")
    oracle.add_argument("--beta", type=float, default=DEFAULTS["beta"])
    oracle.add_argument("--lambda", dest="lam", type=float, default=DEFAULTS["lam"])
    oracle.add_argument(
        "--buffer", dest="buffer_cap_s", type=float, default=DEFAULTS["buffer_cap_s"]
    )

    gen = commands.add_parser("gen", help="Generate a synthetic trace or manifest.")
    kinds = gen.add_subparsers(dest="kind", required=True)
    trace = kinds.add_parser("trace")
    trace.add_argument("--length", type=int, default=300)
    trace.add_argument("--mean", type=float, default=1.0, help="Mean Mbps.")
    trace.add_argument("--stddev", type=float, default=0.0)
    trace.add_argument("--seed", type=int, default=0)
    trace.add_argument(
        "--model", choices=data_sources.TRACE_MODELS, default="constant"
    )
    trace.add_argument("--out", required=True)
    manifest = kinds.add_parser("manifest")
    manifest.add_argument("--chunks", type=int, default=60)
    manifest.add_argument("--levels", type=int, default=5)
    manifest.add_argument("--duration", type=int, default=4)
    manifest.add_argument("--startup", type=int, default=None)
    manifest.add_argument("--jitter", type=float, default=0.0, help="Percent.")
    manifest.add_argument("--seed", type=int, default=0)
    manifest.add_argument("--out", required=True)
    return parser


def _config(args, algorithm) -> SessionConfig:
    return SessionConfig(
        window=args.window,
        eta=args.eta,
        beta=args.beta,
        lam=args.lam,
        buffer_cap_s=args.buffer_cap_s,
        low_buffer_threshold_s=args.low_buffer_threshold_s,
        algorithm=algorithm,
        predictor=args.predictor,
        prediction_scale=args.prediction_scale,
        baseline_params=BaselineParams(
            bba_cushion_s=min(30, args.buffer_cap_s)
            if args.bba_cushion_s is None
            else args.bba_cushion_s,
            bba_reservoir_s=min(10, args.buffer_cap_s / 3)
            if args.bba_reservoir_s is None
            else args.bba_reservoir_s,
        ),
    )


def cmd_simulate(args) -> int:
    """Run one session and write ``<out>.json`` and ``<out>.csv``."""
    manifest = data_sources.read_manifest(args.manifest)
    trace = data_sources.read_trace(args.trace)
    config = _config(args, args.algo)
    log = run_session(manifest, trace, config, trace_name=Path(args.trace).stem)
    data_sources.session_export(log, args.out)
    print(
        f"{log.label}: QoE {log.qoe():.6f}, stall {log.total_stall}s, "
        f"levels {list(log.level_counts)}"
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    """Run every algorithm on every trace of a directory."""
    manifest = data_sources.read_manifest(args.manifest)
    paths = sorted(p for p in Path(args.trace_dir).iterdir() if p.is_file())
    if not paths:
        raise ValueError(f"No trace files in {args.trace_dir}.")
    traces = {p.stem: data_sources.read_trace(p) for p in paths}
    algorithms = [name.strip() for name in args.algos.split(",") if name.strip()]
    configs = {name: _config(args, name) for name in algorithms}
    report = run_comparison(
        manifest, traces, configs, QoEParams(args.beta, args.lam), args.reference
    )
    data_sources.comparison_export(report, args.out)
    for (trace, label), error in report.errors.items():
        print(f"{trace} / {label}: {error}", file=sys.stderr)
    return EXIT_OK if report.logs else EXIT_FAILED


def cmd_oracle_check(args) -> int:
    """Compare the whole-video scan with the exhaustive optimum."""
    manifest = data_sources.read_manifest(args.manifest)
    trace = data_sources.read_trace(args.trace)
    ctx = WindowContext(
        1,
        manifest.num_chunks,
        1,
        manifest.startup_delay_s,
        args.buffer_cap_s,
        trace,
    )
    params = QoEParams(args.beta, args.lam)
    result = enumerate_optimal(manifest, trace, ctx, args.beta, args.lam)
    decisions = fastscan_window(ctx, manifest, args.beta, args.lam)
    fastscan_qoe = score(decisions, params, exact_result=True)
    equal = fastscan_qoe == result.best_qoe
    verdict = {
        "instance": {"manifest": args.manifest, "trace": args.trace},
        "cbr": manifest.is_cbr,
        "fastscan_qoe": float(fastscan_qoe),
        "oracle_qoe": float(result.best_qoe),
        "equal": equal,
        "gap": float(result.best_qoe - fastscan_qoe),
        "fastscan_levels": list(decisions.levels),
        "oracle_levels": list(result.best_decisions.levels),
        "enumerated": result.enumerated,
    }
    print(json.dumps(verdict, indent=2, sort_keys=True))
    if manifest.is_cbr and not equal:
        return EXIT_FAILED
    return EXIT_OK


def cmd_gen(args) -> int:
    """Write a synthetic trace or manifest."""
    seed = int(os.environ.get(SEED_VARIABLE, args.seed))
    if args.kind == "trace":
        values = data_sources.generate_trace(
            args.length, args.mean, args.stddev, seed, args.model
        )
        data_sources.write_trace(values, args.out)
    else:
        manifest = data_sources.generate_manifest(
            args.chunks,
            args.levels,
            args.duration,
            args.startup,
            args.jitter,
            seed,
        )
        data_sources.write_manifest(manifest, args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "oracle-check": cmd_oracle_check,
    "gen": cmd_gen,
}


def main(argv=None) -> int:
    """Run the command line and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return EXIT_OK if error.code == 0 else EXIT_INVALID

    ann = Annalist()
    if args.logfile:
        ann.configure(
            logfile=args.logfile,
            analyst_name=args.analyst,
            stream_format_str=STREAM_FORMAT,
        )
    else:
        ann.configure(stream_format_str=STREAM_FORMAT)

    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as error:
        print(f"fastscan {args.command}: {error}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeError as error:
        print(f"fastscan {args.command}: {error}", file=sys.stderr)
        return EXIT_FAILED
