"""
Runtime settings read from the environment (and an optional .env file).

Every tolerance used by the numerical services lives here so that the CLI,
the services and the tests agree on one set of numbers.
"""
import os

from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: str) -> float:
    return float(os.getenv(name, default))


def _env_int(name: str, default: str) -> int:
    return int(os.getenv(name, default))


def _env_flag(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


# Logging
LOG_LEVEL = os.getenv("TORICMA_LOG_LEVEL", "WARNING")
LOG_JSON = _env_flag("TORICMA_LOG_JSON")

# convex_core
TIE_REL_TOL = _env_float("TORICMA_TIE_REL_TOL", "1e-9")
CONVEX_TOL = _env_float("TORICMA_CONVEX_TOL", "1e-8")
LEGENDRE_TOL = _env_float("TORICMA_LEGENDRE_TOL", "1e-9")
DUAL_GRID_INFLATION = _env_float("TORICMA_DUAL_GRID_INFLATION", "0.05")

# polytope
MASS_TOL_EXACT = _env_float("TORICMA_MASS_TOL_EXACT", "1e-10")
MASS_TOL_GRID = _env_float("TORICMA_MASS_TOL_GRID", "1e-6")
CLIP_TOL = _env_float("TORICMA_CLIP_TOL", "1e-12")

# ot_solver
NEWTON_TOL_EXACT = _env_float("TORICMA_NEWTON_TOL", "1e-9")
NEWTON_TOL_GRID = _env_float("TORICMA_NEWTON_TOL_GRID", "1e-6")
MAX_ITER = _env_int("TORICMA_MAX_ITER", "100")
MASS_FLOOR = _env_float("TORICMA_MASS_FLOOR", "0.5")
PUSH_TOL_FACTOR = _env_float("TORICMA_PUSH_TOL_FACTOR", "10")
WORKERS = _env_int("TORICMA_WORKERS", "1")

# toric_bridge / convergence_lab
CONV_TOL = _env_float("TORICMA_CONV_TOL", "1e-4")
SLOPE_TOL = _env_float("TORICMA_SLOPE_TOL", "1e-6")
QUAD_TOL = _env_float("TORICMA_QUAD_TOL", "1e-6")
MOMENT_SLACK = _env_float("TORICMA_MOMENT_SLACK", "1e-9")

DEFAULT_SEED = _env_int("TORICMA_SEED", "0")


def push_tol(newton_tol: float = NEWTON_TOL_EXACT) -> float:
    """Tolerance for pushforward residuals of a solve run at ``newton_tol``."""
    return PUSH_TOL_FACTOR * newton_tol
