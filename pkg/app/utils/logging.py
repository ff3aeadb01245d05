"""
Structured logging configuration for the disordered spin laboratory.

This module provides centralized logging configuration with support for:
- JSON and text log formats
- Structured extra fields (N, lambda, sample index, seed)
- Verdict logging for study bound checks and trend fits
"""

import logging
import sys
import json
from datetime import datetime, timezone
from typing import Dict, Any, Optional
from app.core.config import settings

# Attributes present on every LogRecord; anything else arrived through ``extra``.
_STANDARD_ATTRS = set(
    logging.LogRecord("", 0, "", 0, "", (), None).__dict__.keys()
) | {"message", "asctime"}


class JSONFormatter(logging.Formatter):
    """Custom JSON formatter for structured logging."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record as JSON."""
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        # Add extra fields if present
        for key, value in record.__dict__.items():
            if key not in _STANDARD_ATTRS:
                log_data[key] = value

        # Add exception info if present
        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


class TextFormatter(logging.Formatter):
    """Custom text formatter for human-readable logs."""

    def __init__(self):
        super().__init__(
            fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure process-wide logging based on settings.

    Logs go to stderr; stdout is reserved for study summary lines.

    Args:
        level: Optional override of ``settings.LOG_LEVEL``
    """
    log_level = getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO)

    if settings.LOG_FORMAT.lower() == "json":
        formatter = JSONFormatter()
    else:
        formatter = TextFormatter()

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # Reduce noise from third-party libraries
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numexpr").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific module.

    Args:
        name: Name of the module (typically __name__)

    Returns:
        Configured logger instance
    """
    return logging.getLogger(name)


class VerdictLogger:
    """
    Records the checks and verdicts of one study run.

    Every bound comparison and trend fit is logged and kept, so the JSON
    report can carry a complete trace of why a study passed or failed.
    """

    def __init__(self, study: str, logger: Optional[logging.Logger] = None):
        """
        Initialize verdict logger for a study.

        Args:
            study: Study name (e.g. "concentration")
            logger: Optional logger instance (creates new one if not provided)
        """
        self.study = study
        self.logger = logger or get_logger("studies.verdicts")
        self.records: list[Dict[str, Any]] = []

    def log_check(
        self,
        check: str,
        passed: bool,
        reason: str,
        details: Optional[Dict[str, Any]] = None
    ) -> None:
        """
        Log a single check outcome.

        Args:
            check: Name of the check (e.g. "lemma1_bound")
            passed: Whether the check holds
            reason: Human-readable explanation
            details: Optional numbers behind the decision
        """
        record = {
            "study": self.study,
            "check": check,
            "outcome": "pass" if passed else "fail",
            "reason": reason,
        }
        if details:
            record["details"] = details

        self.records.append(record)

        level = logging.INFO if passed else logging.WARNING
        self.logger.log(
            level,
            f"Check {check}: {record['outcome']} - {reason}",
            extra={"study": self.study, "check": check, "details": details},
        )

    def log_verdict(
        self,
        quantity: str,
        slope: float,
        slope_se: float,
        passed: bool,
        threshold: Optional[float] = None,
    ) -> None:
        """
        Log a fitted trend verdict.

        Args:
            quantity: Fitted quantity name
            slope: Log-log slope against N
            slope_se: Standard error of the slope
            passed: Verdict pass flag
            threshold: Slope threshold used, if any
        """
        self.log_check(
            check=f"trend:{quantity}",
            passed=passed,
            reason=f"slope {slope:.4f} +/- {slope_se:.4f}",
            details={"slope": slope, "slope_se": slope_se, "threshold": threshold},
        )

    def all_passed(self) -> bool:
        """True when no recorded check failed."""
        return all(r["outcome"] == "pass" for r in self.records)

    def get_summary(self) -> Dict[str, Any]:
        """
        Get a summary of all recorded checks.

        Returns:
            Summary with counts by outcome and the failed check names
        """
        summary: Dict[str, Any] = {
            "study": self.study,
            "total_checks": len(self.records),
            "by_outcome": {},
            "failed": [],
        }

        for record in self.records:
            outcome = record["outcome"]
            summary["by_outcome"][outcome] = summary["by_outcome"].get(outcome, 0) + 1
            if outcome == "fail":
                summary["failed"].append(record["check"])

        return summary
