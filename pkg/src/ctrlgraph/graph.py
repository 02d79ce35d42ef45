"""Free-space graph, controller graph construction and shortest-path search."""

import heapq
import logging
import time
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .controller import LocalController, is_certified
from .errors import (A1Violated, A2Violated, A3Violated, EmptyGraph, EmptyGrid, OutsideFreeSpace,
                     PlannerError)
from .geometry import EPS_INTERIOR, intersection_interior_nonempty
from .lti import EquilibriumFamily, equilibrium_for_output, solve_dare, solve_discrete_lyapunov
from .scaling import FixedGainScaler, max_scale_closed_form
from .sdp import SDPSynthesizer

log = logging.getLogger(__name__)

EPS_EDGE = 1e-9
METHODS = ("fixed-gain-lqr", "sdp", "sdp-fixed-gain")


@dataclass(frozen=True)
class FreeSpaceGraph:
    nodes: tuple
    edges: frozenset

    def neighbors(self, k):
        return sorted(j for i, j in self.edges if i == k)


def build_free_space_graph(Y):
    """Connect components whose pairwise intersection has nonempty interior."""
    n = len(Y)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if intersection_interior_nonempty(Y[i], Y[j]):
                edges.add((i, j))
                edges.add((j, i))
    return FreeSpaceGraph(tuple(range(n)), frozenset(edges))


def existence_check(gY, Y, y0, yf):
    """Breadth-first search from every component holding ``y0`` to any holding ``yf``."""
    starts = [k for k, c in enumerate(Y) if c.contains(y0)]
    goals = {k for k, c in enumerate(Y) if c.contains(yf)}
    if not starts:
        raise OutsideFreeSpace(f"initial output {np.asarray(y0)} is outside the free space")
    if not goals:
        raise OutsideFreeSpace(f"target output {np.asarray(yf)} is outside the free space")
    seen = set(starts)
    queue = deque(starts)
    while queue:
        k = queue.popleft()
        if k in goals:
            return True
        for j in gY.neighbors(k):
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return False


@dataclass(frozen=True)
class GridSample:
    y: np.ndarray
    components: tuple


def sample_grid(Y, spacing, extra=()):
    """Axis-aligned lattice over the bounding box of the output set.

    Lattice points start at the lower corner of the box. A point is kept
    and tagged with every component holding it strictly inside (by
    ``EPS_INTERIOR``); points in no component are dropped. ``extra`` points
    (start and goal outputs) are prepended so search endpoints never depend
    on grid alignment.
    """
    lo, hi = Y.bounding_box()
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), lo.shape)
    if np.any(spacing <= 0):
        raise ValueError("grid spacing must be positive")
    axes = []
    for a, b, h in zip(lo, hi, spacing):
        count = int(np.floor((b - a) / h + 1e-9)) + 1
        axes.append(a + h * np.arange(count))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
    samples = []
    seen = set()
    for y in list(np.atleast_2d(extra)) + list(mesh) if len(extra) else mesh:
        key = tuple(np.round(y, 9))
        if key in seen:
            continue
        seen.add(key)
        comps = tuple(Y.containing(y, EPS_INTERIOR))
        if comps:
            samples.append(GridSample(np.array(y, dtype=float), comps))
    if not samples:
        raise EmptyGrid("no grid point lies inside the output set")
    return samples


class ControllerGraph:
    """Controllers plus weighted edges ``i -> j`` (switching from node ``i`` into node ``j``'s set).

    ``edges`` is either a mapping ``{(i, j): w}`` or a triple of arrays
    ``(src, dst, weight)``; it is stored in compressed-row form so graphs
    with millions of edges stay compact.
    """

    def __init__(self, nodes, edges, method="", S=None, failures=None, timings=None):
        self.nodes = list(nodes)
        self.method = method
        self.S = [] if S is None else S
        self.failures = [] if failures is None else failures
        self.timings = {} if timings is None else timings
        if isinstance(edges, dict):
            items = sorted(edges.items())
            src = np.array([k[0] for k, _ in items], dtype=np.int64)
            dst = np.array([k[1] for k, _ in items], dtype=np.int64)
            w = np.array([v for _, v in items], dtype=float)
        else:
            src, dst, w = (np.asarray(a) for a in edges)
            order = np.lexsort((dst, src))
            src, dst, w = src[order].astype(np.int64), dst[order].astype(np.int64), w[order]
        n = len(self.nodes)
        if src.size and (src.min() < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError("edge endpoint out of range")
        self.indptr = np.searchsorted(src, np.arange(n + 1)).astype(np.int64)
        self.indices = dst
        self.weights = w.astype(float)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_edges(self):
        return int(self.indices.size)

    def successors(self, i):
        """Arrays ``(targets, weights)`` of the edges leaving ``i``, targets ascending."""
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.indices[a:b], self.weights[a:b]

    def edge_arrays(self):
        src = np.repeat(np.arange(self.n_nodes), np.diff(self.indptr))
        return src, self.indices, self.weights

    @property
    def edges(self):
        """Edges as a ``{(i, j): w}`` dict; convenient for small graphs only."""
        src, dst, w = self.edge_arrays()
        return {(int(i), int(j)): float(v) for i, j, v in zip(src, dst, w)}

    def start_nodes(self, x0):
        return [c.id for c in self.nodes if c.contains(x0)]

    def target_nodes(self, yf, tol=1e-9):
        """Nodes designed at an equilibrium whose output is ``yf`` itself."""
        yf = np.asarray(yf, dtype=float)
        return [c.id for c in self.nodes
                if np.linalg.norm(c.y_eq - yf) <= tol * (1.0 + np.linalg.norm(yf))]

    def goal_nodes(self, sys, yf, exact=True):
        """Search targets for output ``yf``.

        With ``exact`` these are the controllers stabilizing ``yf`` itself, so
        the final switch lands on a controller that drives the output to the
        target. Otherwise every node whose invariant set holds an equilibrium
        state with output ``yf`` qualifies.
        """
        if exact:
            return self.target_nodes(yf)
        eq = equilibrium_for_output(sys, yf)
        goals = []
        for c in self.nodes:
            if isinstance(eq, EquilibriumFamily):
                # closest family member in the node's metric
                N = eq.basis[:sys.nx]
                e0 = eq.x - c.x_eq
                if N.size:
                    G = N.T @ c.P @ N
                    z = -np.linalg.lstsq(G, N.T @ c.P @ e0, rcond=None)[0]
                    e0 = e0 + N @ z
                inside = float(e0 @ c.P @ e0) <= c.level
            else:
                inside = c.contains(eq.x)
            if inside:
                goals.append(c.id)
        return goals


def edge_test_values(nodes):
    """Matrix ``V[i, j] = (x_i - x_j)' P_j (x_i - x_j) / rho_j**2``."""
    Xe = np.array([c.x_eq for c in nodes])
    V = np.empty((len(nodes), len(nodes)))
    for j, c in enumerate(nodes):
        D = Xe - c.x_eq
        V[:, j] = np.einsum("ij,jk,ik->i", D, c.P, D) / c.level
    return V


def _edges(nodes, S, eps=EPS_EDGE):
    Xe = np.array([c.x_eq for c in nodes])
    # Euclidean prefilter: the ellipsoid of node j fits in a ball of radius rho_j / sqrt(lambda_min)
    tree = cKDTree(Xe)
    src, dst, wts = [], [], []
    for j, c in enumerate(nodes):
        radius = c.rho / np.sqrt(np.linalg.eigvalsh(c.P)[0])
        cand = np.array(tree.query_ball_point(c.x_eq, radius * (1.0 + 1e-9)), dtype=np.int64)
        cand = cand[cand != j]
        if not cand.size:
            continue
        D = Xe[cand] - c.x_eq
        vals = np.einsum("ij,jk,ik->i", D, c.P, D)
        keep = vals < c.level * (1.0 - eps)
        D = D[keep]
        src.append(cand[keep])
        dst.append(np.full(D.shape[0], j, dtype=np.int64))
        wts.append(np.maximum(np.einsum("ij,jk,ik->i", D, S[j], D), 0.0))
    if not src:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(wts)


def default_state_scale(sys, F, P, Y, U):
    """Per-state magnitudes of the fixed-gain ellipsoid at a central output."""
    from .geometry import chebyshev

    center, _ = chebyshev(Y[0])
    eq = equilibrium_for_output(sys, center)
    if isinstance(eq, EquilibriumFamily):
        return np.sqrt(np.diag(np.linalg.inv(P)))
    rho = max_scale_closed_form(sys, F, P, eq.x, eq.u, eq.y, Y[0], U)
    return rho * np.sqrt(np.diag(np.linalg.inv(P)))


def build_graph(sys, samples, method, cost, Y, U, solver=None):
    """Design one controller per (sample, containing component) and link them.

    Failed designs are logged and skipped. Edge weights use the shared DARE
    solution for the fixed LQR gain and a per-node Lyapunov solution
    otherwise.
    """
    if method not in METHODS:
        raise ValueError(f"unknown design method {method!r}; expected one of {METHODS}")
    t0 = time.perf_counter()
    P_lqr, F_lqr = solve_dare(sys, cost)
    nodes, S, failures = [], [], []
    if method == "fixed-gain-lqr":
        scaler = FixedGainScaler(sys, F_lqr, P_lqr, Y, U, method)
        for s in samples:
            try:
                for r in scaler.scale(s.y, s.components):
                    nodes.append(r.controller)
                    S.append(P_lqr)
            except PlannerError as exc:
                failures.append((s.y, str(exc)))
                log.info("skipping sample %s: %s", s.y, exc)
    else:
        d = default_state_scale(sys, F_lqr, P_lqr, Y, U)
        kwargs = {} if solver is None else {"solver": solver}
        syn = SDPSynthesizer(sys, Y, U, F=None if method == "sdp" else F_lqr, state_scale=d,
                             **kwargs)
        S_fixed = P_lqr if method == "sdp-fixed-gain" else None
        for s in samples:
            try:
                eq = equilibrium_for_output(sys, s.y, U)
                if isinstance(eq, EquilibriumFamily):
                    raise PlannerError("synthesis needs a unique equilibrium")
            except PlannerError as exc:
                failures.append((s.y, str(exc)))
                log.info("skipping sample %s: %s", s.y, exc)
                continue
            for k in s.components:
                try:
                    res = syn.synthesize(eq, k)
                    ctrl = res.controller(eq, k, method)
                    if S_fixed is None:
                        Acl = sys.A + sys.B @ res.F
                        Sj = solve_discrete_lyapunov(Acl, cost.Q + res.F.T @ cost.R @ res.F)
                    else:
                        Sj = S_fixed
                except PlannerError as exc:
                    failures.append((s.y, str(exc)))
                    log.info("skipping sample %s in component %d: %s", s.y, k, exc)
                    continue
                nodes.append(ctrl)
                S.append(Sj)
    t1 = time.perf_counter()
    if not nodes:
        raise EmptyGraph(f"no controller could be designed ({len(failures)} failures)")
    nodes = [c.with_id(i) for i, c in enumerate(nodes)]
    edges = _edges(nodes, S)
    t2 = time.perf_counter()
    timings = {"synthesis": t1 - t0, "edges": t2 - t1, "total": t2 - t0}
    return ControllerGraph(nodes, edges, method, S, failures, timings)


def verify_nodes(sys, graph, Y, U):
    """Ids of nodes whose stored invariant set fails its certificate."""
    return [c.id for c in graph.nodes if not is_certified(sys, c, Y[c.component], U)]


@dataclass(frozen=True)
class GraphPath:
    nodes: tuple
    cost: float


def shortest_path(graph, starts, goals):
    """Minimum-weight path from any start node to any goal node (Dijkstra).

    Ties between equal tentative distances are broken by the smaller node id.
    """
    starts = sorted(set(int(i) for i in starts))
    goals = set(int(i) for i in goals)
    if not starts:
        raise A2Violated("no controller's invariant set contains the initial state")
    if not goals:
        raise A1Violated("no controller stabilizes an equilibrium at the target output")
    n = graph.n_nodes
    dist = np.full(n, np.inf)
    prev = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[starts] = 0.0
    heap = [(0.0, s) for s in starts]
    heapq.heapify(heap)
    while heap:
        d, i = heapq.heappop(heap)
        if done[i]:
            continue
        done[i] = True
        if i in goals:
            path = [i]
            while prev[path[-1]] >= 0:
                path.append(int(prev[path[-1]]))
            return GraphPath(tuple(reversed(path)), d)
        js, ws = graph.successors(i)
        nd = d + ws
        better = (nd < dist[js]) & ~done[js]
        for j, v in zip(js[better].tolist(), nd[better].tolist()):
            dist[j] = v
            prev[j] = i
            heapq.heappush(heap, (v, j))
    raise A3Violated("no graph path joins a start controller to a goal controller")


def write_adjacency(graph, path):
    """Plain-text edge list: a header, then one ``i j weight`` line per edge."""
    with open(path, "w") as fh:
        fh.write(f"# nodes {graph.n_nodes} edges {graph.n_edges} method {graph.method}\n")
        for i, j, w in zip(*graph.edge_arrays()):
            fh.write(f"{i} {j} {float(w)!r}\n")


def read_adjacency(path):
    edges = {}
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            i, j, w = line.split()
            edges[(int(i), int(j))] = float(w)
    return edges


def write_dot(graph, path, highlight=()):
    """Graphviz digraph with node positions at the equilibrium outputs."""
    on_path = set(zip(highlight, highlight[1:]))
    with open(path, "w") as fh:
        fh.write("digraph controllers {\n")
        for c in graph.nodes:
            pos = ",".join(f"{v:.6g}" for v in c.y_eq[:2])
            fh.write(f'  {c.id} [pos="{pos}!", component={c.component}];\n')
        for i, j, w in zip(*graph.edge_arrays()):
            extra = ", color=red" if (i, j) in on_path else ""
            fh.write(f"  {i} -> {j} [weight={w:.6g}{extra}];\n")
        fh.write("}\n")


__all__ = [
    "LocalController", "FreeSpaceGraph", "ControllerGraph", "GridSample", "GraphPath",
    "build_free_space_graph", "existence_check", "sample_grid", "build_graph", "shortest_path",
    "verify_nodes", "edge_test_values", "write_adjacency", "read_adjacency", "write_dot",
]
