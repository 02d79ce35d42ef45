"""Scenario files and the bundled spacecraft rendezvous case.

A scenario is a JSON object::

    {
      "name": "spacecraft",
      "system": {"Ac": [[...]], "Bc": [[...]], "T": 30.0, "C": [[...]]},
                 # or {"A": [[...]], "B": [[...]], "C": [[...]]}
      "input_set": {"H": [[...]], "K": [...]},
      "output_set": [{"H": [[...]], "K": [...]}, ...],
      "y0": [...], "x0": [...] (optional), "yf": [...],
      "grid": {"spacing": 20.0} (scalar or one entry per output),
      "method": "fixed-gain-lqr" | "sdp" | "sdp-fixed-gain",
      "cost": {"Q": [[...]], "R": [[...]]},
      "termination": {"output_tol": 1.0, "max_steps": 2000},
      "seed": 0,
      "obstacles": [{"H": [[...]], "K": [...]}, ...] (optional, reporting only)
    }

Matrices are nested row-major lists. When ``x0`` is omitted the planner
starts at the equilibrium state for ``y0``.
"""

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import DimensionError, OutsideFreeSpace, ScenarioError
from .geometry import Polytope, UnionOfPolytopes
from .graph import METHODS
from .lti import CostModel, LTISystem, equilibrium_for_output, zoh_discretize

MEAN_MOTION = 1.1e-3
SAMPLE_PERIOD = 30.0
THRUST_LIMIT = 1e-2
BOUNDING_BOX = ((-400.0, -400.0), (1000.0, 1100.0))
DEBRIS_CENTER = (300.0, 400.0)
DEBRIS_SIDE = 100.0
SPACECRAFT_GRID = 20.0


def hcw_matrices(n=MEAN_MOTION):
    """Continuous-time in-plane relative dynamics, state ``(y1, y2, dy1, dy2)``."""
    Ac = np.array([[0.0, 0.0, 1.0, 0.0],
                   [0.0, 0.0, 0.0, 1.0],
                   [3.0 * n ** 2, 0.0, 0.0, 2.0 * n],
                   [0.0, 0.0, -2.0 * n, 0.0]])
    Bc = np.vstack([np.zeros((2, 2)), np.eye(2)])
    C = np.hstack([np.eye(2), np.zeros((2, 2))])
    return Ac, Bc, C


def box_minus_box(outer_lo, outer_hi, hole_lo, hole_hi):
    """Cover ``outer \\ hole`` by flipping each face of the hole and clipping to ``outer``."""
    outer = Polytope.box(outer_lo, outer_hi)
    hole = Polytope.box(hole_lo, hole_hi)
    n = hole.dim
    comps = []
    # per coordinate: the half-space below the hole, then the one above it
    for i in range(n):
        e = np.eye(n)[i]
        comps.append(outer.intersect(Polytope(e[None, :], [hole_lo[i]])))
        comps.append(outer.intersect(Polytope(-e[None, :], [-hole_hi[i]])))
    return comps, hole


@dataclass
class Scenario:
    sys: LTISystem
    U: Polytope
    Y: UnionOfPolytopes
    y0: np.ndarray
    yf: np.ndarray
    cost: CostModel
    x0: np.ndarray = None
    grid: np.ndarray = SPACECRAFT_GRID
    method: str = "fixed-gain-lqr"
    output_tol: float = 1.0
    max_steps: int = 2000
    seed: int = 0
    name: str = ""
    obstacles: list = field(default_factory=list)

    def initial_state(self):
        if self.x0 is not None:
            return np.asarray(self.x0, dtype=float)
        return equilibrium_for_output(self.sys, self.y0).x

    def with_method(self, method):
        return replace(self, method=method)


def _array(obj, loc, ndim):
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"not a numeric array ({exc})", loc) from None
    if ndim == 2 and a.ndim == 1 and a.size:
        a = a[None, :]
    if a.ndim != ndim:
        raise ScenarioError(f"expected a {ndim}-d array, got shape {a.shape}", loc)
    return a


def _polytope(obj, loc):
    if not isinstance(obj, dict) or "H" not in obj or "K" not in obj:
        raise ScenarioError("expected an object with 'H' and 'K'", loc)
    H = _array(obj["H"], f"{loc}.H", 2)
    K = _array(obj["K"], f"{loc}.K", 1)
    if H.shape[0] != K.size:
        raise DimensionError(f"{loc}: H has {H.shape[0]} rows but K has {K.size} entries")
    try:
        return Polytope(H, K)
    except ValueError as exc:
        raise ScenarioError(str(exc), loc) from None


def scenario_from_dict(d):
    def need(key, where=d, loc=""):
        if key not in where:
            raise ScenarioError("missing field", f"{loc}{key}")
        return where[key]

    sysd = need("system")
    C = _array(need("C", sysd, "system."), "system.C", 2)
    if "Ac" in sysd:
        Ac = _array(sysd["Ac"], "system.Ac", 2)
        Bc = _array(need("Bc", sysd, "system."), "system.Bc", 2)
        T = float(need("T", sysd, "system."))
        if Bc.shape[0] != Ac.shape[0]:
            raise DimensionError(f"system.Bc: {Bc.shape[0]} rows, expected {Ac.shape[0]}")
        A, B = zoh_discretize(Ac, Bc, T)
        cont = {"Ac": Ac, "Bc": Bc, "T": T}
    else:
        A = _array(need("A", sysd, "system."), "system.A", 2)
        B = _array(need("B", sysd, "system."), "system.B", 2)
        cont = {}
    try:
        sys = LTISystem(A, B, C, **cont)
    except DimensionError as exc:
        raise DimensionError(f"system: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(str(exc), "system") from None
    U = _polytope(need("input_set"), "input_set")
    if U.dim != sys.nu:
        raise DimensionError(f"input_set: dimension {U.dim}, system has {sys.nu} inputs")
    comps = [_polytope(c, f"output_set[{k}]") for k, c in enumerate(need("output_set"))]
    for k, c in enumerate(comps):
        if c.dim != sys.ny:
            raise DimensionError(f"output_set[{k}]: dimension {c.dim}, system has {sys.ny} outputs")
    Y = UnionOfPolytopes(tuple(comps))
    y0 = _array(need("y0"), "y0", 1)
    yf = _array(need("yf"), "yf", 1)
    for name, v in (("y0", y0), ("yf", yf)):
        if v.size != sys.ny:
            raise DimensionError(f"{name}: {v.size} entries, system has {sys.ny} outputs")
        if not Y.containing(v):
            raise OutsideFreeSpace(f"{name} = {v.tolist()} is not inside the output set")
    x0 = None
    if d.get("x0") is not None:
        x0 = _array(d["x0"], "x0", 1)
        if x0.size != sys.nx:
            raise DimensionError(f"x0: {x0.size} entries, system has {sys.nx} states")
    costd = need("cost")
    try:
        cost = CostModel(_array(need("Q", costd, "cost."), "cost.Q", 2),
                         _array(need("R", costd, "cost."), "cost.R", 2))
    except ValueError as exc:
        raise ScenarioError(str(exc), "cost") from None
    if cost.Q.shape != (sys.nx, sys.nx) or cost.R.shape != (sys.nu, sys.nu):
        raise DimensionError("cost: Q or R does not match the system dimensions")
    grid = np.asarray(d.get("grid", {}).get("spacing", SPACECRAFT_GRID), dtype=float)
    if grid.ndim > 1 or (grid.ndim == 1 and grid.size != sys.ny) or np.any(grid <= 0):
        raise ScenarioError("spacing must be positive, scalar or one per output", "grid.spacing")
    method = d.get("method", "fixed-gain-lqr")
    if method not in METHODS:
        raise ScenarioError(f"unknown method {method!r}", "method")
    term = d.get("termination", {})
    obstacles = [_polytope(o, f"obstacles[{k}]") for k, o in enumerate(d.get("obstacles", []))]
    return Scenario(sys, U, Y, y0, yf, cost, x0, grid if grid.ndim else float(grid), method,
                    float(term.get("output_tol", 1.0)), int(term.get("max_steps", 2000)),
                    int(d.get("seed", 0)), d.get("name", ""), obstacles)


def _poly_dict(p):
    return {"H": p.H.tolist(), "K": p.K.tolist()}


def scenario_to_dict(s):
    if s.sys.Ac is not None:
        sysd = {"Ac": s.sys.Ac.tolist(), "Bc": s.sys.Bc.tolist(), "T": s.sys.T, "C": s.sys.C.tolist()}
    else:
        sysd = {"A": s.sys.A.tolist(), "B": s.sys.B.tolist(), "C": s.sys.C.tolist()}
    grid = s.grid.tolist() if isinstance(s.grid, np.ndarray) else s.grid
    d = {
        "name": s.name,
        "system": sysd,
        "input_set": _poly_dict(s.U),
        "output_set": [_poly_dict(c) for c in s.Y],
        "y0": np.asarray(s.y0).tolist(),
        "yf": np.asarray(s.yf).tolist(),
        "grid": {"spacing": grid},
        "method": s.method,
        "cost": {"Q": s.cost.Q.tolist(), "R": s.cost.R.tolist()},
        "termination": {"output_tol": s.output_tol, "max_steps": s.max_steps},
        "seed": s.seed,
    }
    if s.x0 is not None:
        d["x0"] = np.asarray(s.x0).tolist()
    if s.obstacles:
        d["obstacles"] = [_poly_dict(o) for o in s.obstacles]
    return d


def load_scenario(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON ({exc.msg})", f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(d, dict):
        raise ScenarioError("top level must be an object", str(path))
    return scenario_from_dict(d)


def save_scenario(s, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)
        fh.write("\n")


def spacecraft_scenario(method="fixed-gain-lqr", grid=SPACECRAFT_GRID):
    """Docking around a square piece of debris with bounded normalized thrust."""
    Ac, Bc, C = hcw_matrices()
    sys = LTISystem.from_continuous(Ac, Bc, C, SAMPLE_PERIOD)
    U = Polytope.box([-THRUST_LIMIT] * 2, [THRUST_LIMIT] * 2)
    half = DEBRIS_SIDE / 2.0
    c = np.array(DEBRIS_CENTER)
    comps, debris = box_minus_box(BOUNDING_BOX[0], BOUNDING_BOX[1], c - half, c + half)
    cost = CostModel(np.diag([1e2, 1e2, 1e7, 1e7]), 2e7 * np.eye(2))
    return Scenario(sys, U, UnionOfPolytopes(tuple(comps)), np.array([450.0, 650.0]),
                    np.array([0.0, 0.0]), cost, None, grid, method, 1.0, 2000, 0,
                    "spacecraft", [debris])


def bundled_scenario_path():
    return resources.files("ctrlgraph") / "data" / "spacecraft.json"
