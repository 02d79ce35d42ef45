"""Command line front end and the check -> grid -> build -> search -> execute pipeline."""

import argparse
import csv
import json
import logging
import sys as _sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import A3Violated, PlannerError, Timeout
from .graph import (METHODS, build_free_space_graph, build_graph, existence_check, sample_grid,
                    shortest_path, write_adjacency, write_dot)
from .planner import baseline_lqr_run, execute
from .scenario import bundled_scenario_path, load_scenario

log = logging.getLogger("ctrlgraph")

IO_ERROR_EXIT = 10


def export_sets(graph, sys):
    """Projected invariant ellipses ``{y : (y - c)' Sigma^{-1} (y - c) <= 1}`` plus edges.

    ``Sigma = rho^2 C P^{-1} C'``; for two outputs the semi-axes and the
    major-axis angle (radians) are included for plotting.
    """
    if graph is None or not graph.nodes:
        warnings.warn("graph has no nodes; exporting an empty set file", stacklevel=2)
        return {"nodes": [], "edges": []}
    out = []
    for c in graph.nodes:
        Sigma = c.level * sys.C @ np.linalg.solve(c.P, sys.C.T)
        Sigma = 0.5 * (Sigma + Sigma.T)
        w, V = np.linalg.eigh(Sigma)
        entry = {
            "id": c.id,
            "component": c.component,
            "center": (sys.C @ c.x_eq).tolist(),
            "shape": Sigma.tolist(),
            "semi_axes": np.sqrt(np.maximum(w, 0.0))[::-1].tolist(),
        }
        if Sigma.shape == (2, 2):
            entry["angle"] = float(np.arctan2(V[1, -1], V[0, -1]))
        out.append(entry)
    src, dst, _ = graph.edge_arrays()
    return {"nodes": out, "edges": np.column_stack([src, dst]).tolist()}


@dataclass
class PipelineResult:
    exists: bool
    samples: list = None
    graph: object = None
    path: object = None
    plan: object = None
    baseline: object = None
    timings: dict = field(default_factory=dict)
    error: PlannerError = None


def run_pipeline(scn, stages=("check", "grid", "build", "search", "execute"), skip_ahead=False,
                 baseline=True):
    """Run the planning stages in order, timing each one.

    Stops after an infeasible existence check or after the last requested
    stage. Planner errors from a stage are re-raised with the stage name.
    """
    res = PipelineResult(exists=False)
    t_all = time.perf_counter()

    def timed(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except PlannerError as exc:
            exc.args = (f"[{name}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
            raise
        finally:
            res.timings[name] = time.perf_counter() - t0

    gY = build_free_space_graph(scn.Y)
    res.exists = timed("check", lambda: existence_check(gY, scn.Y, scn.y0, scn.yf))
    if not res.exists or stages == ("check",):
        res.timings["total"] = time.perf_counter() - t_all
        return res
    res.samples = timed("grid", lambda: sample_grid(scn.Y, scn.grid, extra=[scn.y0, scn.yf]))
    if "build" in stages:
        res.graph = timed("build", lambda: build_graph(scn.sys, res.samples, scn.method, scn.cost,
                                                       scn.Y, scn.U))
    x0 = scn.initial_state()
    if "search" in stages:
        def search():
            return shortest_path(res.graph, res.graph.start_nodes(x0),
                                 res.graph.goal_nodes(scn.sys, scn.yf))
        res.path = timed("search", search)
    if "execute" in stages:
        def run():
            try:
                return execute(scn.sys, res.graph, res.path.nodes, x0, scn.yf, scn.U, scn.Y,
                               scn.cost, scn.output_tol, scn.max_steps, skip_ahead)
            except Timeout as exc:
                res.error = exc
                return exc.partial
        res.plan = timed("execute", run)
        if baseline:
            res.baseline = timed("baseline", lambda: baseline_lqr_run(
                scn.sys, scn.cost, x0, scn.yf, scn.U, scn.Y, scn.output_tol, scn.max_steps))
    res.timings["total"] = time.perf_counter() - t_all
    return res


def write_trajectory(plan, path):
    nx, nu, ny = plan.x.shape[1], plan.u.shape[1], plan.y.shape[1]
    header = (["t"] + [f"x{i}" for i in range(nx)] + [f"u{i}" for i in range(nu)]
              + [f"y{i}" for i in range(ny)] + ["node_id", "feasible_u", "feasible_y"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(plan.x.shape[0]):
            w.writerow([t] + [repr(float(v)) for v in plan.x[t]] + [repr(float(v)) for v in plan.u[t]]
                       + [repr(float(v)) for v in plan.y[t]]
                       + [int(plan.nodes[t]), int(plan.feasible_u[t]), int(plan.feasible_y[t])])


def write_nodes(graph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        ny = graph.nodes[0].y_eq.size if graph.nodes else 0
        w.writerow(["id", "component"] + [f"y{i}" for i in range(ny)] + ["rho", "log_det_inv_P"])
        for c in graph.nodes:
            logdet = -np.linalg.slogdet(c.P / c.level)[1]
            w.writerow([c.id, c.component] + [repr(float(v)) for v in c.y_eq]
                       + [repr(c.rho), repr(float(logdet))])


def _plan_summary(plan):
    return {
        "cost": plan.cost,
        "steps": plan.steps,
        "termination": plan.termination,
        "input_violations": plan.input_violations,
        "output_violations": plan.output_violations,
        "final_output": plan.y[-1].tolist(),
    }


def write_bundle(res, scn, out_dir):
    """Write the artifact files of a pipeline run into ``out_dir``.

    Everything except ``timings.json`` is a deterministic function of the
    scenario and flags.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = scn.grid.tolist() if isinstance(scn.grid, np.ndarray) else scn.grid
    summary = {
        "scenario": scn.name,
        "method": scn.method,
        "grid_spacing": grid,
        "seed": scn.seed,
        "node_policy": "one node per (sample, containing component)",
        "termination_rule": f"||y - yf|| <= {scn.output_tol} with the final node active",
        "exists": res.exists,
    }
    if res.samples is not None:
        summary["samples"] = len(res.samples)
    if res.graph is not None:
        summary.update(nodes=res.graph.n_nodes, edges=res.graph.n_edges,
                       failed_designs=len(res.graph.failures))
        write_adjacency(res.graph, out / "graph.txt")
        write_dot(res.graph, out / "graph.dot", res.path.nodes if res.path else ())
        write_nodes(res.graph, out / "nodes.csv")
        with open(out / "sets.json", "w") as fh:
            json.dump(export_sets(res.graph, scn.sys), fh)
    if res.path is not None:
        summary["path"] = list(res.path.nodes)
        summary["path_weight"] = res.path.cost
        summary["path_outputs"] = [res.graph.nodes[i].y_eq.tolist() for i in res.path.nodes]
    if res.plan is not None:
        summary["plan"] = _plan_summary(res.plan)
        write_trajectory(res.plan, out / "trajectory.csv")
    if res.baseline is not None:
        summary["baseline_lqr"] = _plan_summary(res.baseline)
        write_trajectory(res.baseline, out / "baseline_trajectory.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    with open(out / "timings.json", "w") as fh:
        json.dump(res.timings, fh, indent=2)
    return summary


STAGES = {
    "check": ("check",),
    "build": ("check", "grid", "build"),
    "plan": ("check", "grid", "build", "search"),
    "run": ("check", "grid", "build", "search", "execute"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="ctrlgraph", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check", "build", "plan", "run", "export"):
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", default=None, help="scenario JSON (default: bundled spacecraft)")
        sp.add_argument("--method", choices=METHODS, default=None)
        sp.add_argument("--grid", type=float, default=None, help="grid spacing override")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out-dir", default="out")
        sp.add_argument("--skip-ahead", action="store_true",
                        help="switch to the farthest path node whose set holds the state")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "export":
            sp.add_argument("--what", choices=("sets", "trajectory"), default="sets")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scn = load_scenario(args.scenario or bundled_scenario_path())
        if args.method:
            scn.method = args.method
        if args.grid:
            scn.grid = args.grid
        if args.seed is not None:
            scn.seed = args.seed
        if args.command == "export":
            stages = STAGES["build"] if args.what == "sets" else STAGES["run"]
        else:
            stages = STAGES[args.command]
        res = run_pipeline(scn, stages, skip_ahead=args.skip_ahead,
                           baseline=args.command == "run")
        summary = write_bundle(res, scn, args.out_dir)
    except PlannerError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=_sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=_sys.stderr)
        return IO_ERROR_EXIT
    if not res.exists:
        print("existence check failed: no path through the free-space graph", file=_sys.stderr)
        return A3Violated.exit_code
    print(json.dumps({k: v for k, v in summary.items() if k not in ("path", "path_outputs")},
                     indent=2))
    if res.error is not None:
        print(f"error ({type(res.error).__name__}): {res.error}", file=_sys.stderr)
        return res.error.exit_code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
