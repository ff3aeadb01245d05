"""
Command-line entry point for the disordered spin laboratory.

Each subcommand runs one study, prints a one-line summary to stdout and writes
the CSV/JSON reports. Logs go to stderr.

Exit codes:
    0  every check and verdict passed
    1  a check or verdict failed, or too many samples failed
    2  config, model-size or I/O error
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from app.core.config import settings
from app.core.spin_algebra import SpinAlgebraError
from app.models.reports import StudyKind, StudyResult
from app.services.ensemble_driver import (
    StudyAbortedError,
    StudyError,
    run_assumption_diagnostics,
    run_concentration_study,
    run_lambda_sweep,
    run_theorem_study,
)
from app.services.model_builder import ModelBuildError
from app.services.replica_lab import (
    ReplicaLabError,
    chatterjee_decomposition,
    gg_ratio_trend,
    limit_commutativity_probe,
)
from app.services.report_writer import write_reports
from app.services.self_check import run_algebra_suite
from app.services.study_config import LoadedConfig, StudyConfigError, load_study_config
from app.utils.logging import VerdictLogger, get_logger, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


# ============================================================================
# Study runners
# ============================================================================


def _envelope(loaded: LoadedConfig, kind: StudyKind, logbook: VerdictLogger, **parts) -> StudyResult:
    config = loaded.config
    return StudyResult(
        study=config.name,
        kind=kind,
        config_hash=loaded.config_hash,
        master_seed=config.master_seed,
        beta=config.beta,
        passed=logbook.all_passed(),
        checks=list(logbook.records),
        verdict_summary=logbook.get_summary(),
        **parts,
    )


def run_concentration(loaded: LoadedConfig, threads: int) -> StudyResult:
    verdicts = VerdictLogger("concentration")
    run = run_concentration_study(loaded.config, threads, verdicts)
    return _envelope(loaded, "concentration", verdicts,
                     size_points=run.reports, failed_samples=run.failed)


def run_theorem(loaded: LoadedConfig, threads: int) -> StudyResult:
    verdicts = VerdictLogger("theorem")
    run, trend = run_theorem_study(loaded.config, threads, verdicts)
    return _envelope(loaded, "theorem", verdicts,
                     size_points=run.reports, verdicts=trend, failed_samples=run.failed)


def run_sweep(loaded: LoadedConfig, threads: int) -> StudyResult:
    verdicts = VerdictLogger("sweep")
    sweep, failed = run_lambda_sweep(loaded.config, threads, verdicts)
    return _envelope(loaded, "sweep", verdicts, sweep=sweep, failed_samples=failed)


def run_assumptions(loaded: LoadedConfig, threads: int) -> StudyResult:
    verdicts = VerdictLogger("assumptions")
    rows, failed = run_assumption_diagnostics(loaded.config, threads, verdicts)
    return _envelope(loaded, "assumptions", verdicts, assumptions=rows, failed_samples=failed)


def run_replica(loaded: LoadedConfig, threads: int) -> StudyResult:
    """RSB decomposition, plus the overlap ratio trend when the model admits it."""
    verdicts = VerdictLogger("replica")
    report, failed = chatterjee_decomposition(loaded.config, threads, verdicts)
    ratios = []
    try:
        ratios, ratio_failed = gg_ratio_trend(loaded.config, threads, verdicts)
        failed = failed + ratio_failed
    except ReplicaLabError as exc:
        logger.info("Skipping overlap ratio trend", extra={"reason": str(exc)})
    return _envelope(loaded, "replica", verdicts, rsb=report, gg_ratio=ratios, failed_samples=failed)


def run_commutativity(loaded: LoadedConfig, threads: int) -> StudyResult:
    verdicts = VerdictLogger("commutativity")
    rows, failed = limit_commutativity_probe(loaded.config, threads, verdicts)
    return _envelope(loaded, "commutativity", verdicts, commutativity=rows, failed_samples=failed)


STUDIES: Dict[str, Callable[[LoadedConfig, int], StudyResult]] = {
    "study-concentration": run_concentration,
    "study-theorem": run_theorem,
    "study-sweep": run_sweep,
    "study-assumptions": run_assumptions,
    "study-replica": run_replica,
    "study-commutativity": run_commutativity,
}


# ============================================================================
# Argument parsing
# ============================================================================


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, default=Path("reports"), help="Report directory")
    parser.add_argument("--seed", type=int, default=None, help="Override [study].master_seed")
    parser.add_argument("--csv", action=argparse.BooleanOptionalAction, default=True,
                        help="Write the long-format CSV report")
    parser.add_argument("--json", action=argparse.BooleanOptionalAction, default=True,
                        help="Write the JSON report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinlab",
        description="Exact-diagonalization studies of disordered quantum spin systems",
    )
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)

    algebra = commands.add_parser("verify-algebra", help="Run the algebra identity suite")
    _add_output_flags(algebra)

    for name in STUDIES:
        study = commands.add_parser(name, help=f"Run {name.removeprefix('study-')} study")
        study.add_argument("--config", type=Path, required=True, help="Study config (TOML)")
        study.add_argument("--threads", type=int, default=settings.DEFAULT_THREADS,
                           help="Worker threads for independent samples")
        _add_output_flags(study)
    return parser


# ============================================================================
# Entry point
# ============================================================================


def execute(args: argparse.Namespace) -> StudyResult:
    if args.command == "verify-algebra":
        return run_algebra_suite(seed=args.seed if args.seed is not None else 0)
    loaded = load_study_config(args.config, seed_override=args.seed)
    return STUDIES[args.command](loaded, max(1, args.threads))


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        result = execute(args)
        written: List[Path] = write_reports(result, args.out, csv=args.csv, json=args.json)
    except StudyConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StudyAbortedError as exc:
        print(f"study aborted: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (StudyError, ReplicaLabError, ModelBuildError, SpinAlgebraError) as exc:
        print(f"study cannot run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    print(result.summary_line())
    logger.info("Study finished", extra={"passed": result.passed, "files": [str(p) for p in written]})
    return EXIT_OK if result.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
