"""
Logging configuration
- Structured JSON logs for machine parsing of solver runs
- Numeric context (iteration, residual, step) carried as extras
- Performance monitoring of solves and verification suites
"""
import logging
import json
import time
from typing import Any, Dict, Optional
from datetime import datetime, timezone
import sys

from .settings import LOG_JSON, LOG_LEVEL

LOGGER_NAME = "toricma"

# Extras copied verbatim into JSON records when present
_EXTRA_FIELDS = (
    "command",
    "seed",
    "iteration",
    "residual",
    "step",
    "suite",
    "duration_ms",
    "n_atoms",
)


class JSONFormatter(logging.Formatter):
    """Format logs as JSON for structured logging"""

    def format(self, record: logging.LogRecord) -> str:
        log_data: Dict[str, Any] = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno,
        }

        if record.exc_info:
            log_data['exception'] = self.formatException(record.exc_info)

        for field in _EXTRA_FIELDS:
            if hasattr(record, field):
                log_data[field] = getattr(record, field)

        return json.dumps(log_data, ensure_ascii=False, default=str)


class PerformanceLogger:
    """Context manager for logging operation performance"""

    def __init__(self, logger: logging.Logger, operation: str, **context: Any):
        self.logger = logger
        self.operation = operation
        self.context = context
        self.start_time: Optional[float] = None
        self.duration_ms: Optional[int] = None

    def __enter__(self):
        self.start_time = time.perf_counter()
        self.logger.info(f"Starting: {self.operation}", extra=self.context)
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.duration_ms = int((time.perf_counter() - (self.start_time or 0.0)) * 1000)

        if exc_type is None:
            self.logger.info(
                f"Completed: {self.operation} ({self.duration_ms}ms)",
                extra={**self.context, 'duration_ms': self.duration_ms}
            )
        else:
            # Expected failures (no convergence, bad input) are reported by the caller
            self.logger.warning(
                f"Failed: {self.operation} ({self.duration_ms}ms) - {exc_val}",
                extra={**self.context, 'duration_ms': self.duration_ms},
            )


def setup_logging(
    level: str = "WARNING",
    json_format: bool = False,
) -> logging.Logger:
    """
    Configure the package logger

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        json_format: Use JSON formatter for structured logs

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(getattr(logging, level.upper()))

    logger.handlers.clear()

    # stdout is reserved for command output; diagnostics go to stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, level.upper()))

    if json_format:
        formatter: logging.Formatter = JSONFormatter()
    else:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    logger.propagate = False

    return logger


# Global logger instance
logger = setup_logging(level=LOG_LEVEL, json_format=LOG_JSON)
