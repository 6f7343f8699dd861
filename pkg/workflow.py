"""
Command dispatcher
RunConfig validates what the command line asked for; run() executes one
command, writes its artifacts and returns a summary dict
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from services.convex_core import SampledFunction, UniformGrid, legendre_grid, legendre_pl
from services.ot_solver import comparison_grid, oracle_1d, solve_dual
from services.polytope import delzant_check_2d
from services.toric_bridge import class_membership, complex_real_factor_check, moment_image_check
from tools import io_formats
from tools.example_instances import write_example
from tools.verify_suites import SUITES, run_suite
from utils import settings
from utils.error_handling import InvalidInputError, NoConvergenceError, ToricMAError, VerificationFailedError
from utils.logging_config import PerformanceLogger, logger

COMMANDS = ("solve", "legendre", "verify", "toric", "oracle1d", "example")

# files each command needs before it can start
REQUIRED_INPUTS = {
    "solve": ("polytope", "density", "target"),
    "oracle1d": ("polytope", "density", "target"),
    "legendre": ("input",),
    "toric": ("potential", "polytope"),
}


class RunConfig(BaseModel):
    command: Literal["solve", "legendre", "verify", "toric", "oracle1d", "example"]
    polytope: Optional[Path] = None
    density: Optional[Path] = None
    target: Optional[Path] = None
    input: Optional[Path] = None
    potential: Optional[Path] = None
    solution: Optional[Path] = None
    suite: Optional[str] = None
    name: Optional[str] = None
    tol: Optional[float] = None
    max_iter: int = Field(default=settings.MAX_ITER, ge=1)
    grid_radius: Optional[float] = None
    grid_res: Optional[int] = None
    seed: int = settings.DEFAULT_SEED
    out: Path = Path(".")

    @field_validator("tol", "grid_radius")
    @classmethod
    def _positive(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("grid_res")
    @classmethod
    def _resolution(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 8:
            raise ValueError("grid resolution must be at least 8 nodes per axis")
        return v

    @model_validator(mode="after")
    def _inputs_present(self) -> "RunConfig":
        for key in REQUIRED_INPUTS.get(self.command, ()):
            path = getattr(self, key)
            if path is None:
                raise ValueError(f"'{self.command}' needs --{key}")
            if not path.is_file():
                raise ValueError(f"--{key} file not found: {path}")
        if self.command == "verify":
            if self.suite not in SUITES:
                raise ValueError(f"--suite must be one of {', '.join(SUITES)}")
            if self.solution is not None:
                for key in ("solution", "polytope", "density", "target"):
                    path = getattr(self, key)
                    if path is None or not path.is_file():
                        raise ValueError(f"re-verifying a solution needs an existing --{key}")
        if self.command == "example" and not self.name:
            raise ValueError("'example' needs --name")
        return self

    @classmethod
    def from_args(cls, **kwargs: Any) -> "RunConfig":
        try:
            return cls(**{k: v for k, v in kwargs.items() if v is not None})
        except ValidationError as exc:
            errors = [{"field": ".".join(str(x) for x in e["loc"]) or "config", "error": e["msg"]} for e in exc.errors()]
            raise InvalidInputError(f"invalid arguments: {errors[0]['error']}", {"errors": errors})


def _instance(config: RunConfig) -> Dict[str, Any]:
    P = io_formats.load_polytope(config.polytope)
    return {
        "polytope": P,
        "density": io_formats.load_density(config.density, P),
        "measure": io_formats.load_measure(config.target),
    }


def _grid(config: RunConfig, dim: int, default_radius: float) -> UniformGrid:
    radius = config.grid_radius or default_radius
    res = config.grid_res or (41 if dim == 1 else 21)
    return UniformGrid.centered(radius, res, dim)


def _with_seed(data: Dict[str, Any], config: RunConfig) -> Dict[str, Any]:
    return {**data, "seed": config.seed}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run_solve(config: RunConfig) -> Dict[str, Any]:
    inst = _instance(config)
    P = inst["polytope"]
    artifacts: List[str] = []
    try:
        sol = solve_dual(P, inst["density"], inst["measure"], tol=config.tol, max_iter=config.max_iter)
    except NoConvergenceError as exc:
        if exc.solution is not None:
            path = io_formats.write_json(_with_seed(exc.solution.to_dict(), config), config.out / "solution.json")
            logger.warning(f"best iterate written to {path}")
        raise
    artifacts.append(str(io_formats.write_json(_with_seed(sol.to_dict(), config), config.out / "solution.json")))
    if config.grid_res is not None:
        grid = _grid(config, P.dim, float(comparison_grid(P, sol.targets).upper[0]))
        samples = SampledFunction.from_callable(grid, sol.u.values)
        artifacts.append(str(io_formats.write_sampled_csv(samples, config.out / "u.csv")))
    return {
        "success": True,
        "iterations": sol.diagnostics.iterations,
        "residual": sol.diagnostics.residual,
        "artifacts": artifacts,
    }


def run_oracle1d(config: RunConfig) -> Dict[str, Any]:
    inst = _instance(config)
    oracle = oracle_1d(inst["polytope"], inst["density"], inst["measure"])
    path = io_formats.write_json(_with_seed(oracle.to_dict(), config), config.out / "oracle.json")
    return {"success": True, "breakpoints": oracle.breakpoints.tolist(), "artifacts": [str(path)]}


def run_legendre(config: RunConfig) -> Dict[str, Any]:
    """Conjugate of a PL function (JSON) or of convex samples (CSV)."""
    source = config.input
    if source.suffix.lower() == ".csv":
        samples = io_formats.load_sampled_csv(source)
        dual = None
        if config.grid_radius is not None:
            dual = _grid(config, samples.dim, config.grid_radius)
        conj = legendre_grid(samples, dual=dual)
        path = io_formats.write_sampled_csv(conj, config.out / "conjugate.csv")
        return {"success": True, "artifacts": [str(path)]}

    f = io_formats.load_pl(source)
    conj = legendre_pl(f)
    artifacts = [str(io_formats.write_json(io_formats.domain_pl_to_dict(conj), config.out / "conjugate.json"))]
    if config.grid_res is not None:
        radius = config.grid_radius or float(np.abs(f.slopes).max()) + 1.0
        grid = _grid(config, f.dim, radius)
        artifacts.append(str(io_formats.write_sampled_csv(SampledFunction.from_callable(grid, conj.values), config.out / "conjugate.csv")))
    return {"success": True, "pieces": conj.pieces.n_pieces, "artifacts": artifacts}


def _load_potential(path: Path) -> Any:
    if path.suffix.lower() == ".csv":
        return io_formats.load_sampled_csv(path)
    return io_formats.load_pl(path)


def run_toric(config: RunConfig) -> Dict[str, Any]:
    P = io_formats.load_polytope(config.polytope)
    F = _load_potential(config.potential)
    if F.dim != P.dim:
        raise InvalidInputError("potential and polytope differ in dimension")
    membership = class_membership(F, P)
    moment = moment_image_check(F, P)
    report: Dict[str, Any] = {
        "in_P": membership.in_P,
        "in_Pplus": membership.in_P_plus,
        "moment_violation": moment.max_violation,
        "factor_ratio": None,
        "class_series": {"radii": membership.radii, "sup": membership.sup_series, "inf": membership.inf_series},
    }
    if P.dim == 1 and isinstance(F, SampledFunction):
        h = float(F.grid.spacing[0])
        window = (float(F.grid.origin[0]) + 2 * h, float(F.grid.upper[0]) - 2 * h)
        try:
            report["factor_ratio"] = complex_real_factor_check(F, P, window=window).ratio
        except ToricMAError as exc:
            report["factor_note"] = exc.message
    if P.dim == 2:
        try:
            report["delzant"] = delzant_check_2d(P).model_dump()
        except ToricMAError as exc:
            report["delzant_note"] = exc.message
    path = io_formats.write_json(_with_seed(report, config), config.out / "toric_report.json")
    return {"success": True, "report": report, "artifacts": [str(path)]}


def run_verify(config: RunConfig) -> Dict[str, Any]:
    stored = None
    if config.solution is not None:
        stored = _instance(config)
        stored["u"] = io_formats.load_solution(config.solution)["u"]
    document = run_suite(config.suite, config.seed, stored)
    path = io_formats.write_json(document, config.out / "report.json")
    if not document["pass"]:
        failing = [name for name, prop in document["properties"].items() if not prop["pass"]]
        raise VerificationFailedError(f"suite {config.suite} failed", {"failing": failing, "report": str(path)})
    return {"success": True, "suite": config.suite, "artifacts": [str(path)]}


def run_example(config: RunConfig) -> Dict[str, Any]:
    return write_example(config.name, config.out / config.name)


RUNNERS = {
    "solve": run_solve,
    "oracle1d": run_oracle1d,
    "legendre": run_legendre,
    "toric": run_toric,
    "verify": run_verify,
    "example": run_example,
}


def run(config: RunConfig) -> Dict[str, Any]:
    """Execute one command; errors propagate as ToricMAError subclasses"""
    config.out.mkdir(parents=True, exist_ok=True)
    with PerformanceLogger(logger, config.command, command=config.command, seed=config.seed):
        result = RUNNERS[config.command](config)
    return {"command": config.command, "seed": config.seed, **result}
