"""Command line: ``wbfm {synth,estimate,run,montecarlo}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .config import ConfigError, load_config
from .covariance import NumericalError
from .io import FormatError

log = logging.getLogger("wbfm")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; our contract reserves 2 for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in u64: {text}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value configuration file")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=_u64, help="override the configured seed")
    common.add_argument("--workers", type=_positive, default=1,
                        help="parallel Monte-Carlo workers (default 1)")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = _Parser(prog="wbfm", description="Frequency-modulation and spectrum estimation "
                                         "for modulated stationary signals.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="synthesize a modulated signal and its truth")
    pe = sub.add_parser("estimate", parents=[common], help="estimate modulation and spectrum")
    pe.add_argument("--input", type=Path, required=True, help="signal file (.wbfm or .csv)")
    pe.add_argument("--truth", type=Path, help="gamma_true.csv for scoring")
    pe.add_argument("--truth-spectrum", type=Path, help="spectrum_true.csv for scoring")
    sub.add_parser("run", parents=[common], help="synth then estimate in one go")
    sub.add_parser("montecarlo", parents=[common], help="repeat run over num_realizations seeds")
    return p


def _cmd_synth(cfg, args):
    syn = ex.synthesize(cfg)
    with ex.staged_output(args.out) as tmp:
        ex.write_synthesis(tmp, syn)
        ex.write_config_echo(tmp, cfg)


def _cmd_estimate(cfg, args):
    # read everything before touching the output directory
    Y = ex.load_signal(args.input)
    law = ex.load_truth(args.truth) if args.truth else None
    spec = ex.load_spectrum(args.truth_spectrum, cfg.L) if args.truth_spectrum else None
    if spec is not None and law is None:
        raise UsageError("--truth-spectrum requires --truth (the track offset aligns the spectra)")
    res = ex.estimate(cfg, Y, law, spec)
    with ex.staged_output(args.out) as tmp:
        ex.write_estimate(tmp, res, plots=not args.no_plots)
        ex.write_config_echo(tmp, cfg)
    if res.metrics:
        log.info("corrected gamma' RMSE %.3f bins", res.metrics["rmse_corrected"])


def _cmd_run(cfg, args):
    syn = ex.synthesize(cfg)
    res = ex.estimate(cfg, syn.signal.Y, syn.law, syn.spectrum)
    with ex.staged_output(args.out) as tmp:
        ex.write_synthesis(tmp, syn)
        ex.write_estimate(tmp, res, plots=not args.no_plots)
        ex.write_config_echo(tmp, cfg)
    log.info("corrected gamma' RMSE %.3f bins after %d iterations",
             res.metrics["rmse_corrected"], res.log.iterations)


def _cmd_montecarlo(cfg, args):
    if cfg.num_realizations < 2:
        raise UsageError("num_realizations must be at least 2 for montecarlo")
    mc = ex.run_montecarlo(cfg, workers=args.workers)
    with ex.staged_output(args.out) as tmp:
        ex.write_montecarlo(tmp, mc, plots=not args.no_plots)
        ex.write_config_echo(tmp, cfg)
    log.info("%d/%d runs completed; log-log slope %.3f", mc.completed, len(mc.runs),
             mc.loglog_slope)


COMMANDS = {"synth": _cmd_synth, "estimate": _cmd_estimate, "run": _cmd_run,
            "montecarlo": _cmd_montecarlo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, seed=args.seed)
        COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"wbfm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"wbfm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, FormatError) as exc:
        print(f"wbfm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # remaining ValueErrors come from invalid parameter combinations
        print(f"wbfm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
