"""Command-line entry points: simulate, fit, diagnose.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
failure.  All randomness is seeded through the config, so reruns of any
command produce byte-identical outputs, including with --threads > 1.
"""

import argparse
import os
import sys

from . import dataio
from .diagnostics import summarize, write_trace_exports
from .errors import ConfigError, DataError, NumericalError
from .gibbs import run_chain
from .simulate import simulate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _cmd_simulate(args):
    config = dataio.load_config(args.config)
    params = dataio.truth_params_from_config(config)
    n, window_end, seed, windowed, probs = dataio.simulation_block(config)
    level_probs = probs if probs.size > 1 else None
    records, paths = simulate_dataset(params, n, window_end, seed,
                                      windowed=windowed, level_probs=level_probs)
    levels = dataio.covariate_levels(config)
    os.makedirs(args.out, exist_ok=True)
    data_path = dataio.write_dataset(records, os.path.join(args.out, "dataset.csv"),
                                     levels=levels)
    dataio.write_paths(paths, [r.subject_id for r in records],
                       os.path.join(args.out, "paths.csv"))
    dataio.write_truth(params, config["simulation"],
                       os.path.join(args.out, "truth.json"))
    n_events = sum(r.n_events for r in records)
    print(f"wrote {len(records)} subjects, {n_events} events to {data_path}")
    return EXIT_OK


def _cmd_fit(args):
    config = dataio.load_config(args.config)
    sampler = dataio.sampler_from_config(config, mode=args.mode, threads=args.threads)
    levels = dataio.covariate_levels(config)
    records = dataio.read_dataset(args.data, levels=levels)
    if not records:
        raise DataError(f"{args.data}: dataset has no subjects")
    samples = run_chain(sampler, records)
    if not samples:
        raise ConfigError("run produced no retained samples "
                          "(iterations must exceed burn_in)")
    os.makedirs(args.out, exist_ok=True)
    dataio.write_samples(samples, os.path.join(args.out, "samples.csv"))
    run_info = {
        "n_subjects": len(records),
        "iterations": sampler.iterations,
        "burn_in": sampler.burn_in,
        "thinning": sampler.thinning,
        "seed": sampler.seed,
        "mode": sampler.mode,
        "threads": sampler.threads,
        "retained": len(samples),
    }
    dataio.write_run_summary(summarize(samples), run_info,
                             os.path.join(args.out, "summary.json"))
    print(f"retained {len(samples)} samples from {sampler.iterations} sweeps "
          f"over {len(records)} subjects")
    return EXIT_OK


def _cmd_diagnose(args):
    sweeps, traces = dataio.read_samples(args.samples)
    os.makedirs(args.out, exist_ok=True)
    rows = write_trace_exports(traces, sweeps, args.out)
    flagged = sum(1 for r in rows if r.low_confidence)
    print(f"summarized {len(rows)} traces ({flagged} low-confidence) "
          f"to {os.path.join(args.out, 'summary.csv')}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmpp-outcome",
        description="Simulate and fit latent-state event-process models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a cohort from a config truth block")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a dataset")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--data", required=True, help="dataset file from simulate")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=["mmpp", "cthmm-only"], default=None,
                   help="override the sampler mode from the config")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${dataio.THREADS_ENV_VAR} or config)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("diagnose", help="summarize a sample directory")
    p.add_argument("--samples", required=True, help="directory or file from fit")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
