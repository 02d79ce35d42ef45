"""Switching execution of a controller sequence and trajectory cost."""

from dataclasses import dataclass, field

import numpy as np

from .errors import A2Violated, Timeout
from .lti import equilibrium_for_output, solve_dare

FEAS_TOL = 1e-9


@dataclass
class PlanResult:
    """Executed closed loop.

    ``x`` and ``y`` hold ``N + 1`` samples and ``u`` holds the input applied
    at each of them, so ``u[t]`` pairs with ``x[t]`` for ``t = 0..N``.
    ``nodes[t]`` is the active controller id (``-1`` for the unswitched LQR
    baseline) and ``switches`` lists ``(t, node)`` for every change.
    """

    path: tuple
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    nodes: np.ndarray
    switches: list
    cost: float
    termination: str
    feasible_u: np.ndarray
    feasible_y: np.ndarray
    x_ref: np.ndarray = None
    u_ref: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return self.x.shape[0] - 1

    @property
    def input_violations(self):
        return int(np.sum(~self.feasible_u))

    @property
    def output_violations(self):
        return int(np.sum(~self.feasible_y))

    @property
    def safe(self):
        return self.input_violations == 0 and self.output_violations == 0


def target_equilibrium(sys, yf):
    # a family is represented by its minimum-norm member
    eq = equilibrium_for_output(sys, yf)
    return eq.x, eq.u


def evaluate_cost(x, u, cost, stop_time=None, x_ref=None, u_ref=None):
    """``sum_{t=0}^{N} dx' Q dx + du' R du`` about the reference equilibrium."""
    x = np.atleast_2d(x)
    u = np.atleast_2d(u)
    N = x.shape[0] - 1 if stop_time is None else stop_time
    dx = x[:N + 1] - (0.0 if x_ref is None else x_ref)
    du = u[:N + 1] - (0.0 if u_ref is None else u_ref)
    return float(np.einsum("ti,ij,tj->", dx, cost.Q, dx) + np.einsum("ti,ij,tj->", du, cost.R, du))


def _feasibility(u, y, U, Y, tol=FEAS_TOL):
    fu = np.all(u @ U.H.T - U.K <= tol, axis=1)
    fy = np.zeros(y.shape[0], dtype=bool)
    for Yk in Y:
        fy |= np.all(y @ Yk.H.T - Yk.K <= tol, axis=1)
    return fu, fy


def execute(sys, graph, path, x0, yf, U, Y, cost, output_tol=1.0, max_steps=2000,
            skip_ahead=False):
    """Run the switching law along ``path``.

    At each step the next controller in the sequence takes over once the
    state is inside its invariant set; otherwise the current one is kept.
    With ``skip_ahead`` the farthest later controller whose set holds the
    state is activated instead. The run stops once the last controller is
    active and the output is within ``output_tol`` of ``yf``; ``Timeout``
    (carrying the partial result) is raised after ``max_steps`` steps.
    """
    path = tuple(int(p) for p in path)
    ctrls = [graph.nodes[p] for p in path]
    x = np.asarray(x0, dtype=float)
    if not ctrls[0].contains(x):
        raise A2Violated(f"initial state is outside the invariant set of node {path[0]}")
    yf = np.asarray(yf, dtype=float)
    x_ref, u_ref = target_equilibrium(sys, yf)
    xs, us, active, switches = [], [], [], []
    i = 0
    termination = "timeout"
    for t in range(max_steps + 1):
        if skip_ahead:
            for k in range(len(ctrls) - 1, i, -1):
                if ctrls[k].contains(x):
                    i = k
                    switches.append((t, path[i]))
                    break
        elif i + 1 < len(ctrls) and ctrls[i + 1].contains(x):
            i += 1
            switches.append((t, path[i]))
        c = ctrls[i]
        u = c.control(x)
        xs.append(x)
        us.append(u)
        active.append(path[i])
        if i == len(ctrls) - 1 and np.linalg.norm(sys.C @ x - yf) <= output_tol:
            termination = "converged"
            break
        x = sys.A @ x + sys.B @ u
    X = np.array(xs)
    Uu = np.array(us)
    Yy = X @ sys.C.T
    fu, fy = _feasibility(Uu, Yy, U, Y)
    J = evaluate_cost(X, Uu, cost, x_ref=x_ref, u_ref=u_ref)
    result = PlanResult(path, X, Uu, Yy, np.array(active), switches, J, termination, fu, fy,
                        x_ref, u_ref, {"output_tol": output_tol, "skip_ahead": skip_ahead})
    if termination != "converged":
        raise Timeout(f"no convergence within {max_steps} steps", partial=result)
    return result


def baseline_lqr_run(sys, cost, x0, yf, U, Y, output_tol=1.0, max_steps=2000):
    """Single unswitched LQR about the target equilibrium, annotated with violations."""
    _, F = solve_dare(sys, cost)
    yf = np.asarray(yf, dtype=float)
    x_ref, u_ref = target_equilibrium(sys, yf)
    x = np.asarray(x0, dtype=float)
    xs, us = [], []
    termination = "timeout"
    for _ in range(max_steps + 1):
        u = F @ (x - x_ref) + u_ref
        xs.append(x)
        us.append(u)
        if np.linalg.norm(sys.C @ x - yf) <= output_tol:
            termination = "converged"
            break
        x = sys.A @ x + sys.B @ u
    X, Uu = np.array(xs), np.array(us)
    Yy = X @ sys.C.T
    fu, fy = _feasibility(Uu, Yy, U, Y)
    J = evaluate_cost(X, Uu, cost, x_ref=x_ref, u_ref=u_ref)
    return PlanResult((), X, Uu, Yy, -np.ones(len(X), dtype=int), [], J, termination, fu, fy,
                      x_ref, u_ref, {"output_tol": output_tol})
