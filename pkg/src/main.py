"""Main entry point for mwxe."""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .cli import COMMANDS, EXIT_IO_ERROR, EXIT_NOT_CONVERGED, load_run_profile, make_run_config
from .config import settings
from .errors import MatrixFileError, SeriesConvergenceError, WideOverflowError
from .logger import cli_logger, set_log_level


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got: {text}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run profile; flags override its values")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR")
    common.add_argument("--lambda", dest="lambda_", type=float, help="decay rate (0 = Laplace)")
    common.add_argument("--lambda0", type=float, help="normalisation scale (default: lambda, or 1)")
    common.add_argument("--levels", type=int, help="number of levels N (builds 0..N-1)")
    common.add_argument("--pmax", dest="p_max", type=int, help="maximum multipole degree")
    common.add_argument("--kmax", dest="k_max", type=int, help="maximum wavelet degree per axis")
    common.add_argument("--eps-a", dest="eps_a", type=float, help="absolute series tolerance")
    common.add_argument("--eps-r", dest="eps_r", type=float, help="relative series tolerance")
    common.add_argument("--eps-sparsity", dest="eps_sparsity", type=float,
                        help="tolerance of the moment-condition sparsity estimate")
    common.add_argument("--m-max", dest="m_max", type=int, help="series term cap")
    common.add_argument("--out", type=Path, help="output directory (build) or file (moments)")
    common.add_argument("--in", dest="in_path", type=Path, help="input matrix file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--samples", type=int, help="validation sample count")
    common.add_argument("--points", type=int, help="ring points for the potential check")
    common.add_argument("--workers", type=int, help="build processes")
    common.add_argument("--keep-zeros", dest="keep_zeros", action="store_true", default=None,
                        help="store entries below eps_a")
    common.add_argument("--lambdas", type=_float_list, help="comma-separated decay rates for sweep")
    common.add_argument("--reference", type=Path, help="reference sparsity tables (YAML)")

    parser = argparse.ArgumentParser(
        prog="mwxe",
        description="Multiwavelet to multipole conversion matrices for the screened-Coulomb kernel.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="write one matrix file per level")
    sub.add_parser("stats", parents=[common], help="sparsity report of a matrix file")
    sub.add_parser("validate", parents=[common], help="series vs quadrature on random entries")
    sub.add_parser("potential", parents=[common], help="multipole vs direct potential of a random block")
    sub.add_parser("sweep", parents=[common], help="level-0 sparsity for several decay rates")
    sub.add_parser("moments", parents=[common], help="dump the moment table")
    return parser


_RUN_FIELDS = ("lambda_", "lambda0", "levels", "p_max", "k_max", "eps_a", "eps_r", "eps_sparsity", "m_max", "out",
               "in_path", "seed", "samples", "points", "workers", "keep_zeros", "lambdas", "reference")


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # usage errors count as configuration errors
        return EXIT_IO_ERROR if e.code else 0

    if args.log_level:
        try:
            set_log_level(args.log_level)
        except AttributeError:
            cli_logger.error(f"Unknown log level: {args.log_level}")
            return EXIT_IO_ERROR

    try:
        profile = load_run_profile(args.config) if args.config else None
        overrides = {name: getattr(args, name) for name in _RUN_FIELDS}
        # profiles use the plain field names
        if profile and "lambda" in profile:
            profile["lambda_"] = profile.pop("lambda")
        if profile and "in" in profile:
            profile["in_path"] = profile.pop("in")
        config = make_run_config(args.command, profile, **overrides)
        return COMMANDS[args.command](config)
    except SeriesConvergenceError as e:
        cli_logger.error(f"Series did not converge: {e}")
        return EXIT_NOT_CONVERGED
    except WideOverflowError as e:
        cli_logger.error(f"Numeric overflow: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_NOT_CONVERGED
    except MatrixFileError as e:
        cli_logger.error(f"Matrix file error: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_IO_ERROR
    except OSError as e:
        cli_logger.error(f"I/O error: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_IO_ERROR
    except ValueError as e:
        cli_logger.error(f"Configuration error: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
