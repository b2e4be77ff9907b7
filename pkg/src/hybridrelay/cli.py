"""Command-line entry point: ``hybridrelay run | summarize | plotdata``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .experiment import (
    PLOT_COLUMNS,
    SUMMARY_COLUMNS,
    emit_plot_data,
    format_csv,
    load_config,
    read_results,
    run,
    summarize,
    write_results,
)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridrelay",
                                description="Monte-Carlo sweeps of hybrid relay transceivers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment described by a YAML config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--trials", type=int, help="override the trial count")
    r.add_argument("--out", help="override the output CSV path")
    r.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")

    s = sub.add_parser("summarize", help="per-point mean and 95%% half-width")
    s.add_argument("results")
    s.add_argument("--out", help="write CSV here instead of stdout")

    d = sub.add_parser("plotdata", help="long-format curve data for plotting")
    d.add_argument("results")
    d.add_argument("--axis", choices=("snr", "sigma_e"), required=True)
    d.add_argument("--metric", default="spectral_efficiency",
                   choices=("spectral_efficiency", "sum_mse", "nonlinear_sum_mse"))
    d.add_argument("--at", type=float, help="value of the other axis to keep")
    d.add_argument("--out", help="write CSV here instead of stdout")
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            over = {}
            if args.seed is not None:
                over["seed"] = args.seed
            if args.trials is not None:
                over["trials"] = args.trials
            if args.out is not None:
                over["output_path"] = args.out
            if over:
                cfg = replace(cfg, **over)
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            result = run(cfg, workers=args.workers)
            write_results(result, cfg.output_path)
            print(f"wrote {len(result.rows)} rows to {cfg.output_path}", file=sys.stderr)
        elif args.command == "summarize":
            _emit(format_csv(summarize(read_results(args.results)), SUMMARY_COLUMNS), args.out)
        else:
            rows = emit_plot_data(read_results(args.results), args.axis, args.metric, args.at)
            _emit(format_csv(rows, PLOT_COLUMNS), args.out)
    except ConfigError as exc:
        print(f"hybridrelay: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hybridrelay: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
