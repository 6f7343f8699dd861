# tools/example_instances.py
"""
Bundled example instances
Each entry writes polytope.json, density.json and measure.json into a folder,
plus EXPECTED.json when the answer is known in closed form
"""
from pathlib import Path
from typing import Any, Dict, List, Union

from tools.io_formats import write_json
from utils.error_handling import InvalidInputError

SQUARE = {"vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]}
TRIANGLE = {"vertices": [[0, 0], [1, 0], [0, 1]]}
UNIT_INTERVAL = {"vertices": [[0], [1]]}

SINGULAR_SOURCE_README = """\
# singular-source

Source measure mu: uniform measure on the horizontal segment [-1, 1] x {0}.
Target measure nu: uniform measure on the vertical segment {0} x [-1, 1].

Both measures live on segments, so neither is absolutely continuous and no
convex transport potential exists. The only candidate is u(x, y) = |y|: its
conjugate u* is finite exactly on {0} x [-1, 1], where u* = 0. A potential
that is constant on the support of nu cannot move nu back onto the spread-out
segment [-1, 1] x {0}, so u is not a weak solution.

No solve is attempted: the solver only accepts densities with 1/C <= g <= C
on a full-dimensional polytope and rejects point, segment and other
lower-dimensional sources as invalid input.
"""

EXAMPLES: Dict[str, Dict[str, Any]] = {
    "delta-center": {
        "description": "unit square, uniform density, all mass at the origin",
        "polytope": SQUARE,
        "density": {"type": "uniform"},
        "measure": {"atoms": [{"point": [0.0, 0.0], "mass": 1.0}]},
        "expected": {
            "u_pieces": [{"slope": v, "intercept": 0.0} for v in SQUARE["vertices"]],
            "note": "u is the support function of the square",
        },
    },
    "delta-triangle": {
        "description": "standard triangle, uniform density, all mass at the origin",
        "polytope": TRIANGLE,
        "density": {"type": "uniform"},
        "measure": {"atoms": [{"point": [0.0, 0.0], "mass": 1.0}]},
        "expected": {
            "u_pieces": [{"slope": v, "intercept": 0.0} for v in TRIANGLE["vertices"]],
            "note": "u is the support function of the triangle",
        },
    },
    "cp1-two-atoms": {
        "description": "P = [0, 1], uniform density, half the mass at 0 and half at 1",
        "polytope": UNIT_INTERVAL,
        "density": {"type": "uniform"},
        "measure": {"atoms": [{"point": [0.0], "mass": 0.5}, {"point": [1.0], "mass": 0.5}]},
        "expected": {
            "breakpoints": [0.5],
            "u_pieces": [
                {"slope": [0.0], "intercept": 0.0},
                {"slope": [0.5], "intercept": 0.0},
                {"slope": [1.0], "intercept": -0.5},
            ],
        },
    },
    "square-two-atoms": {
        "description": "unit square, uniform density, atoms at (0, 0) and (1, 0) with equal mass",
        "polytope": SQUARE,
        "density": {"type": "uniform"},
        "measure": {"atoms": [{"point": [0.0, 0.0], "mass": 0.5}, {"point": [1.0, 0.0], "mass": 0.5}]},
        "expected": {"cell_split": {"axis": 0, "at": 0.5}},
    },
    "linear-density-1d": {
        "description": "P = [0, 1], g(p) = 2p, atoms at 0 and 1 with equal mass",
        "polytope": UNIT_INTERVAL,
        "density": {"type": "polynomial", "coeffs": {"1": 2.0}},
        "measure": {"atoms": [{"point": [0.0], "mass": 0.5}, {"point": [1.0], "mass": 0.5}]},
        "expected": {"breakpoints": [0.5 ** 0.5]},
    },
    "singular-source": {
        "description": "documentation only: a source supported on a segment has no convex transport potential",
        "readme": SINGULAR_SOURCE_README,
    },
}


def list_examples() -> List[str]:
    return sorted(EXAMPLES)


def write_example(name: str, out_dir: Union[str, Path]) -> Dict[str, Any]:
    """
    Write an example's files into out_dir

    Returns:
        Dict with the example name and the written paths
    """
    if name not in EXAMPLES:
        raise InvalidInputError(f"unknown example {name!r}", {"available": list_examples()})
    entry = EXAMPLES[name]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: Dict[str, str] = {}

    if "readme" in entry:
        path = out / "README.md"
        path.write_text(entry["readme"], encoding="utf-8")
        written["readme"] = str(path)
        return {"success": True, "name": name, "files": written}

    for key in ("polytope", "density", "measure"):
        written[key] = str(write_json(entry[key], out / f"{key}.json"))
    if "expected" in entry:
        expected = dict(entry["expected"], description=entry["description"])
        written["expected"] = str(write_json(expected, out / "EXPECTED.json"))
    return {"success": True, "name": name, "files": written}
