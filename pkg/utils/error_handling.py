"""
Error types and user-facing error reporting
Maps failures to machine-readable codes, readable messages and CLI exit codes
"""
from typing import Dict, Any, Optional
import json
import logging
import sys

logger = logging.getLogger("toricma")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFICATION_FAILED = 4


class ToricMAError(Exception):
    """Base class for every error raised by the services."""

    code = "server_error"
    exit_code = EXIT_INTERNAL

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class InvalidInputError(ToricMAError):
    code = "invalid_input"
    exit_code = EXIT_INVALID_INPUT


class ClassViolationError(InvalidInputError):
    """Slope hull of a convex function is not contained in the polytope."""

    code = "class_violation"


class UnsupportedError(InvalidInputError):
    code = "unsupported"


class NotCheckableError(InvalidInputError):
    code = "not_checkable"


class InconsistentStateError(ToricMAError):
    code = "inconsistent_state"
    exit_code = EXIT_INTERNAL


class NoConvergenceError(ToricMAError):
    """Raised when the Newton solver runs out of iterations.

    ``solution`` holds the best iterate with its diagnostics.
    """

    code = "no_convergence"
    exit_code = EXIT_NO_CONVERGENCE

    def __init__(self, message: str, solution: Any = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.solution = solution


class VerificationFailedError(ToricMAError):
    code = "verification_failed"
    exit_code = EXIT_VERIFICATION_FAILED


class ErrorResponse:
    """Standard error document format"""

    def __init__(
        self,
        code: str,
        message: str,
        user_message: str,
        details: Optional[Dict[str, Any]] = None
    ):
        self.code = code
        self.message = message
        self.user_message = user_message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": {
                "code": self.code,
                "message": self.message,
                "user_message": self.user_message,
                "details": self.details
            }
        }


ERROR_MESSAGES = {
    # Input
    "invalid_input": "The input is invalid. Check the referenced files and flags.",
    "class_violation": "The convex function has slopes outside the polytope (not in class P).",
    "unsupported": "This operation is not supported in the requested dimension.",
    "not_checkable": "The polytope has irrational facet normals; the Delzant check does not apply.",

    # Solver
    "no_convergence": "The solver did not converge. The best iterate was written with diagnostics.",
    "inconsistent_state": "An internal consistency check failed.",

    # Verification
    "verification_failed": "At least one verification property failed. See the report.",

    # General
    "server_error": "Unexpected error. Run with TORICMA_LOG_LEVEL=DEBUG for details.",
}


def get_user_friendly_message(error_code: str, default: Optional[str] = None) -> str:
    """Get the readable message for an error code"""
    return ERROR_MESSAGES.get(
        error_code,
        default or "An error occurred."
    )


def create_error_response(
    error_code: str,
    technical_message: str,
    details: Optional[Dict[str, Any]] = None,
) -> ErrorResponse:
    """
    Create standardized error document

    Args:
        error_code: Machine-readable error code
        technical_message: Technical error message (logged)
        details: Additional error details

    Returns:
        ErrorResponse with a readable message attached
    """
    user_message = get_user_friendly_message(error_code)

    error_response = ErrorResponse(
        code=error_code,
        message=technical_message,
        user_message=user_message,
        details=details
    )

    logger.error(f"Error [{error_code}]: {technical_message}")

    return error_response


def handle_exception(exc: BaseException, json_errors: bool = False, stream: Any = None) -> int:
    """Report an exception on stderr and return the CLI exit code"""
    stream = stream or sys.stderr

    if isinstance(exc, ToricMAError):
        response = create_error_response(exc.code, exc.message, exc.details)
        exit_code = exc.exit_code
    else:
        # Don't hide the traceback of genuine bugs
        logger.exception("Unhandled exception", exc_info=exc)
        response = create_error_response("server_error", str(exc))
        exit_code = EXIT_INTERNAL

    if json_errors:
        stream.write(json.dumps(response.to_dict(), ensure_ascii=False, default=str) + "\n")
    else:
        stream.write(f"error [{response.code}]: {response.message}\n  {response.user_message}\n")
    return exit_code
