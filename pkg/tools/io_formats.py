# tools/io_formats.py
"""
File formats for instances, potentials and results
JSON inputs are validated with pydantic; outputs use a fixed float format so
that identical runs give byte-identical files
"""
import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from services.convex_core import DomainPLFunction, PLConvexFunction, SampledFunction, UniformGrid
from services.ma_measure import DiscreteMeasure
from services.polytope import Density, Polytope
from utils.error_handling import InvalidInputError

SINGULAR_KINDS = ("dirac", "point", "segment", "singular")


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------


class HalfspaceSchema(BaseModel):
    normal: List[float]
    offset: float


class PolytopeSchema(BaseModel):
    vertices: Optional[List[List[float]]] = None
    halfspaces: Optional[List[HalfspaceSchema]] = None

    @model_validator(mode="after")
    def _one_description(self) -> "PolytopeSchema":
        if (self.vertices is None) == (self.halfspaces is None):
            raise ValueError("give exactly one of 'vertices' or 'halfspaces'")
        return self


class DensitySchema(BaseModel):
    type: str = "uniform"
    coeffs: Dict[str, float] = Field(default_factory=dict)
    file: Optional[str] = None
    C: Optional[float] = None

    @model_validator(mode="after")
    def _known_type(self) -> "DensitySchema":
        if self.type in SINGULAR_KINDS:
            raise ValueError(f"singular sources ({self.type}) are not supported; g must satisfy 1/C <= g <= C on P")
        if self.type not in ("uniform", "polynomial", "grid"):
            raise ValueError(f"unknown density type {self.type!r}")
        if self.type == "grid" and not self.file:
            raise ValueError("grid densities need a 'file'")
        if self.C is not None and self.C < 1:
            raise ValueError("C must be >= 1")
        return self


class AtomSchema(BaseModel):
    point: List[float]
    mass: float


class MeasureSchema(BaseModel):
    atoms: List[AtomSchema]


class PieceSchema(BaseModel):
    slope: List[float]
    intercept: float


class PLSchema(BaseModel):
    dim: int
    pieces: List[PieceSchema]


class SolutionSchema(BaseModel):
    weights: List[float]
    targets: List[List[float]]
    cells: List[List[List[float]]] = Field(default_factory=list)
    u_pieces: List[PieceSchema]
    diagnostics: Dict[str, Any] = Field(default_factory=dict)


def _read_json(path: Union[str, Path]) -> Any:
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"file not found: {p}", {"path": str(p)})
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{p} is not valid JSON: {exc.msg}", {"path": str(p), "line": exc.lineno})


def _validated(schema: type, data: Any, source: str) -> Any:
    try:
        return schema.model_validate(data)
    except ValidationError as exc:
        errors = [{"field": ".".join(str(x) for x in e["loc"]), "error": e["msg"]} for e in exc.errors()]
        raise InvalidInputError(f"{source} failed validation", {"errors": errors})


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def polytope_from_dict(data: Dict[str, Any], source: str = "polytope") -> Polytope:
    parsed = _validated(PolytopeSchema, data, source)
    if parsed.vertices is not None:
        return Polytope.from_vertices(parsed.vertices)
    return Polytope.from_halfspaces([h.normal for h in parsed.halfspaces], [h.offset for h in parsed.halfspaces])


def load_polytope(path: Union[str, Path]) -> Polytope:
    return polytope_from_dict(_read_json(path), str(path))


def _parse_exponents(key: str, dim: int) -> tuple:
    try:
        exps = tuple(int(part) for part in key.split(","))
    except ValueError:
        raise InvalidInputError(f"bad polynomial exponent key {key!r}; expected e.g. '1,0'")
    if len(exps) != dim:
        raise InvalidInputError(f"exponent key {key!r} does not match dimension {dim}")
    return exps


def density_from_dict(data: Dict[str, Any], P: Polytope, base_dir: Optional[Path] = None, source: str = "density") -> Density:
    parsed = _validated(DensitySchema, data, source)
    if parsed.type == "uniform":
        return Density(P, "uniform", C=parsed.C)
    if parsed.type == "polynomial":
        coeffs = {_parse_exponents(k, P.dim): v for k, v in parsed.coeffs.items()}
        return Density.polynomial(P, coeffs, C=parsed.C)
    grid_path = Path(parsed.file)
    if not grid_path.is_absolute() and base_dir is not None:
        grid_path = base_dir / grid_path
    return Density.from_samples(P, load_sampled_csv(grid_path), C=parsed.C)


def load_density(path: Union[str, Path], P: Polytope) -> Density:
    p = Path(path)
    return density_from_dict(_read_json(p), P, base_dir=p.parent, source=str(p))


def measure_from_dict(data: Dict[str, Any], source: str = "measure") -> DiscreteMeasure:
    parsed = _validated(MeasureSchema, data, source)
    if not parsed.atoms:
        raise InvalidInputError(f"{source} has no atoms")
    return DiscreteMeasure(
        np.array([a.point for a in parsed.atoms], dtype=float),
        np.array([a.mass for a in parsed.atoms], dtype=float),
    )


def load_measure(path: Union[str, Path]) -> DiscreteMeasure:
    return measure_from_dict(_read_json(path), str(path))


def pl_from_dict(data: Dict[str, Any], source: str = "potential") -> PLConvexFunction:
    parsed = _validated(PLSchema, data, source)
    if not parsed.pieces:
        raise InvalidInputError(f"{source} has no pieces")
    if any(len(piece.slope) != parsed.dim for piece in parsed.pieces):
        raise InvalidInputError(f"{source}: slope length differs from dim={parsed.dim}")
    return PLConvexFunction.from_dict(parsed.model_dump())


def load_pl(path: Union[str, Path]) -> PLConvexFunction:
    return pl_from_dict(_read_json(path), str(path))


def load_solution(path: Union[str, Path]) -> Dict[str, Any]:
    """solution.json as weights, targets and the PL potential u."""
    parsed = _validated(SolutionSchema, _read_json(path), str(path))
    dim = len(parsed.targets[0]) if parsed.targets else 1
    u = PLConvexFunction.from_dict({"dim": dim, "pieces": [p.model_dump() for p in parsed.u_pieces]})
    return {
        "weights": np.array(parsed.weights, dtype=float),
        "targets": np.array(parsed.targets, dtype=float).reshape(-1, dim),
        "u": u,
        "diagnostics": parsed.diagnostics,
    }


# ---------------------------------------------------------------------------
# CSV samples
# ---------------------------------------------------------------------------


def _parse_value(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def load_sampled_csv(path: Union[str, Path]) -> SampledFunction:
    """Samples in C order with header x1,...,xn,value; the grid is read off the coordinates."""
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"file not found: {p}", {"path": str(p)})
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "value" or len(header) < 2:
            raise InvalidInputError(f"{p}: header must be x1,...,xn,value")
        dim = len(header) - 1
        try:
            rows = [[_parse_value(v) for v in row] for row in reader if row]
        except ValueError as exc:
            raise InvalidInputError(f"{p}: {exc}")
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != dim + 1:
        raise InvalidInputError(f"{p}: every row needs {dim + 1} columns")
    axes = [np.unique(data[:, k]) for k in range(dim)]
    counts = [a.size for a in axes]
    if int(np.prod(counts)) != data.shape[0]:
        raise InvalidInputError(f"{p}: rows do not form a full grid")
    spacing = []
    for a in axes:
        steps = np.diff(a) if a.size > 1 else np.array([1.0])
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise InvalidInputError(f"{p}: grid is not uniform")
        spacing.append(float(steps[0]))
    grid = UniformGrid(np.array([a[0] for a in axes]), np.array(spacing), tuple(counts))
    if not np.allclose(data[:, :dim], grid.nodes(), rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(data[:, :dim]).max()))):
        raise InvalidInputError(f"{p}: rows are not in row-major grid order")
    return SampledFunction(grid, data[:, dim])


def format_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def write_sampled_csv(s: SampledFunction, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    nodes = s.grid.nodes()
    values = s.values.reshape(-1)
    with p.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{k + 1}" for k in range(s.dim)] + ["value"])
        for node, v in zip(nodes, values):
            writer.writerow([format_float(c) for c in node] + [format_float(v)])
    return p


# ---------------------------------------------------------------------------
# JSON writer
# ---------------------------------------------------------------------------


def _normalize(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return _normalize(obj.model_dump(by_alias=True))
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _normalize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return format_float(x)
        return x
    return obj


class _FixedFloatEncoder(json.JSONEncoder):
    def iterencode(self, o: Any, _one_shot: bool = False):
        # the C encoder ignores float overrides, so go through the Python one
        return json.encoder._make_iterencode(
            {}, self.default, json.encoder.py_encode_basestring_ascii, self.indent,
            lambda x: format(x, ".17g"), self.key_separator, self.item_separator,
            self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


def dumps(data: Any) -> str:
    return json.dumps(_normalize(data), cls=_FixedFloatEncoder, sort_keys=True, indent=2) + "\n"


def write_json(data: Any, path: Union[str, Path]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(data), encoding="utf-8")
    return p


def domain_pl_to_dict(f: DomainPLFunction) -> Dict[str, Any]:
    data = f.pieces.to_dict()
    data["domain"] = {
        "halfspaces": [{"normal": n.tolist(), "offset": float(c)} for n, c in zip(f.normals, f.offsets)],
        "equalities": [{"normal": n.tolist(), "offset": float(c)} for n, c in zip(f.eq_normals, f.eq_offsets)],
    }
    return data
