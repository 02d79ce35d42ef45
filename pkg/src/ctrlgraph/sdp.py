"""Volume-maximizing controller and invariant-ellipsoid synthesis.

Both programs are max-det problems in ``X = P^{-1}``. The full design also
optimizes ``W = F X`` so the gain comes out as ``F = W X^{-1}``; the
fixed-gain variant keeps ``F`` and only shapes the ellipsoid. Problems are
built once per output component with CVXPY parameters and re-solved for each
sample, and every returned point is re-checked against the original matrix
inequalities by :func:`verify_synthesis`, independently of the solver.

Internally the state is rescaled (``x = D z``) and each constraint row is
divided by its slack at the set's Chebyshev center. This keeps the conic
problem well conditioned when positions and velocities differ by orders of
magnitude.
"""

import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .controller import LocalController
from .errors import InfeasibleSample, NotStable, SolverFailure
from .geometry import Ellipsoid, transformed_row_norms
from .lti import is_schur, solve_discrete_lyapunov

# samples closer than this to any constraint row are rejected
MIN_SLACK = 1e-6
# invariance block lower bound, relative to the scaled problem (trace ~ n)
STRICT_DELTA = 1e-9
ACCEPT_MARGIN = -1e-7
MAX_OVERSHOOT = 1e-3
INVARIANCE_TOL = 1e-9
# fallback settings tried in order when the first solve errors out
RETRY_OPTIONS = {"CLARABEL": ({"equilibrate_enable": False},)}

DEFAULT_SOLVER = "CLARABEL"


@dataclass
class SynthesisResult:
    F: np.ndarray
    P: np.ndarray
    log_det_inv_P: float
    status: str
    solve_time: float = 0.0
    residuals: dict = field(default_factory=dict)

    def controller(self, eq, component, method="sdp"):
        return LocalController(self.F, self.P, 1.0, eq.x, eq.u, eq.y, component, method)


@dataclass
class VerificationReport:
    """Solver-independent certificate for a synthesized controller.

    Margins are dimensionless: ``invariance_margin = 1 - ||P^{1/2} A_cl P^{-1/2}||^2``
    and each row margin is the unused fraction of that row's slack.
    """

    invariance_margin: float
    input_margins: np.ndarray
    output_margins: np.ndarray
    spectral_radius: float
    falsifications: int = 0
    simulations: int = 0

    @property
    def worst_row_margin(self):
        return float(min(np.min(self.input_margins, initial=np.inf),
                         np.min(self.output_margins, initial=np.inf)))

    @property
    def worst_margin(self):
        return min(self.invariance_margin, self.worst_row_margin)

    def ok(self, tol=ACCEPT_MARGIN):
        return self.worst_margin >= tol and self.falsifications == 0


def _slacks(poly, v):
    return poly.K - poly.H @ v


class SDPSynthesizer:
    """Reusable max-det programs for one plant and one set of constraints.

    ``F`` fixes the gain (the simplified program); otherwise the gain is a
    decision variable. ``state_scale`` holds per-coordinate magnitudes used
    for internal conditioning. Instances cache CVXPY problems and mutate
    their parameters, so give each worker thread its own instance.
    """

    def __init__(self, sys, Y, U, F=None, state_scale=None, solver=DEFAULT_SOLVER,
                 min_slack=MIN_SLACK, delta=STRICT_DELTA):
        self.sys, self.Y, self.U = sys, Y, U
        self.F = None if F is None else np.atleast_2d(np.asarray(F, dtype=float))
        if self.F is not None and not is_schur(sys.A + sys.B @ self.F):
            raise NotStable("fixed gain does not stabilize the plant")
        d = np.ones(sys.nx) if state_scale is None else np.asarray(state_scale, dtype=float)
        if np.any(d <= 0):
            raise ValueError("state scale must be positive")
        self.d = d
        self.solver = solver
        self.min_slack = min_slack
        self.delta = delta
        self._problems = {}

    @property
    def method(self):
        return "sdp" if self.F is None else "sdp-fixed-gain"

    def _row_scales(self, poly):
        # nominal slack of every row at the Chebyshev center keeps parameters O(1)
        from .geometry import chebyshev

        center, _ = chebyshev(poly)
        return poly.K - poly.H @ center

    def _build(self, k):
        sys = self.sys
        n, m = sys.nx, sys.nu
        D = np.diag(self.d)
        Dinv = np.diag(1.0 / self.d)
        Az = Dinv @ sys.A @ D
        Bz = Dinv @ sys.B
        Cz = sys.C @ D
        Yk = self.Y[k]
        nom_u = self._row_scales(self.U)
        nom_y = self._row_scales(Yk)
        Hu = self.U.H / nom_u[:, None]
        Hy = Yk.H / nom_y[:, None]
        cu = cp.Parameter(self.U.n_rows, nonneg=True)
        cy = cp.Parameter(Yk.n_rows, nonneg=True)
        X = cp.Variable((n, n), symmetric=True)
        cons = []
        if self.F is None:
            W = cp.Variable((m, n))
            M = Az @ X + Bz @ W
            for j in range(self.U.n_rows):
                r = Hu[j:j + 1, :] @ W
                cons.append(cp.bmat([[X, r.T], [r, cp.reshape(cu[j], (1, 1), order="F")]]) >> 0)
            for j in range(Yk.n_rows):
                r = Hy[j:j + 1, :] @ Cz @ X
                cons.append(cp.bmat([[X, r.T], [r, cp.reshape(cy[j], (1, 1), order="F")]]) >> 0)
        else:
            W = None
            Fz = self.F @ D
            M = (Az + Bz @ Fz) @ X
            Gu = Hu @ Fz
            Gy = Hy @ Cz
            for j in range(self.U.n_rows):
                cons.append(Gu[j] @ X @ Gu[j] <= cu[j])
            for j in range(Yk.n_rows):
                cons.append(Gy[j] @ X @ Gy[j] <= cy[j])
        cons.append(cp.bmat([[X, M.T], [M, X]]) >> self.delta * np.eye(2 * n))
        prob = cp.Problem(cp.Maximize(cp.log_det(X)), cons)
        entry = {"prob": prob, "X": X, "W": W, "cu": cu, "cy": cy, "nom_u": nom_u, "nom_y": nom_y}
        self._problems[k] = entry
        return entry

    def synthesize(self, eq, k):
        """Design for equilibrium ``eq`` against component ``k``; returns :class:`SynthesisResult`."""
        Yk = self.Y[k]
        su = _slacks(self.U, eq.u)
        sy = _slacks(Yk, eq.y)
        if np.any(su < self.min_slack) or np.any(sy < self.min_slack):
            raise InfeasibleSample(f"sample {eq.y} is within {self.min_slack} of a constraint")
        entry = self._problems.get(k) or self._build(k)
        entry["cu"].value = (su / entry["nom_u"]) ** 2
        entry["cy"].value = (sy / entry["nom_y"]) ** 2
        t0 = time.perf_counter()
        retries = RETRY_OPTIONS.get(self.solver, ())
        for attempt, opts in enumerate(({},) + retries):
            try:
                entry["prob"].solve(solver=self.solver, **opts)
                break
            except cp.error.SolverError as exc:
                if attempt == len(retries):
                    raise SolverFailure(f"conic solver failed at sample {eq.y}: {exc}") from exc
        elapsed = time.perf_counter() - t0
        status = entry["prob"].status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            raise InfeasibleSample(f"synthesis infeasible at sample {eq.y}")
        Xz = entry["X"].value
        if Xz is None or status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverFailure(f"solver returned status {status} at sample {eq.y}", iterate=Xz)
        Xz = 0.5 * (Xz + Xz.T)
        if np.min(np.linalg.eigvalsh(Xz)) <= 0.0:
            raise SolverFailure(f"solver returned an indefinite iterate at sample {eq.y}", iterate=Xz)
        Pz = np.linalg.inv(Xz)
        if self.F is None:
            F = entry["W"].value @ Pz @ np.diag(1.0 / self.d)
        else:
            F = self.F.copy()
        P = np.diag(1.0 / self.d) @ Pz @ np.diag(1.0 / self.d)
        P = 0.5 * (P + P.T)
        A_cl = self.sys.A + self.sys.B @ F
        if not is_schur(A_cl):
            raise SolverFailure(f"synthesized gain is not stabilizing at sample {eq.y}", iterate=P)
        contraction = _invariance_gain(A_cl, P)
        if 1.0 + INVARIANCE_TOL < contraction < 1.0 + MAX_OVERSHOOT:
            # A' P A <= (1 + e) P and A' S A - S = -P give A' P2 A <= P2 for P2 = P + t S, t >= e
            S = solve_discrete_lyapunov(A_cl, P)
            P = P + 2.0 * (contraction - 1.0) * S
            P = 0.5 * (P + P.T)
            contraction = _invariance_gain(A_cl, P)
        if contraction > 1.0 + INVARIANCE_TOL:
            raise SolverFailure(f"ellipsoid is not invariant (gain {contraction:.12g})",
                                residual=contraction - 1.0, iterate=P)
        # shrinking a level set keeps it invariant, so a solver overshoot is
        # absorbed by rescaling P onto the tightest row
        rho = _closed_form_level(self.sys, F, P, eq, Yk, self.U)
        residuals = {"row_overshoot": max(0.0, 1.0 - rho), "invariance_gain": contraction}
        if rho < 1.0:
            if rho < 1.0 - MAX_OVERSHOOT:
                raise SolverFailure(f"solution violates constraints by {1.0 - rho:.2e}",
                                    residual=1.0 - rho, iterate=P)
            P = P / rho ** 2
        _, logdet = np.linalg.slogdet(P)
        return SynthesisResult(F, P, -logdet, status, elapsed, residuals)


def _invariance_gain(A_cl, P):
    """Largest ``(A x)' P (A x) / x' P x``; at most one for an invariant level set."""
    L = np.linalg.cholesky(P)
    G = L.T @ A_cl @ np.linalg.inv(L.T)
    return float(np.linalg.norm(G, 2) ** 2)


def _closed_form_level(sys, F, P, eq, Yk, U):
    nu = transformed_row_norms(U.H, F, P)
    ny = transformed_row_norms(Yk.H, sys.C, P)
    su = _slacks(U, eq.u)
    sy = _slacks(Yk, eq.y)
    ratios = np.concatenate([su[nu > 0] / nu[nu > 0], sy[ny > 0] / ny[ny > 0]])
    return float(np.min(ratios, initial=np.inf))


def synthesize_controller(sys, eq, Yk, U, state_scale=None, solver=DEFAULT_SOLVER):
    """Jointly design gain and invariant ellipsoid at one equilibrium."""
    from .geometry import UnionOfPolytopes

    Y = UnionOfPolytopes((Yk,), _validate=False)
    return SDPSynthesizer(sys, Y, U, state_scale=state_scale, solver=solver).synthesize(eq, 0)


def synthesize_pi_set_fixed_gain(sys, F, eq, Yk, U, state_scale=None, solver=DEFAULT_SOLVER):
    """Largest invariant ellipsoid for a given stabilizing gain."""
    from .geometry import UnionOfPolytopes

    Y = UnionOfPolytopes((Yk,), _validate=False)
    return SDPSynthesizer(sys, Y, U, F=F, state_scale=state_scale, solver=solver).synthesize(eq, 0)


def boundary_states(ctrl, count, rng):
    dirs = rng.standard_normal((count, ctrl.x_eq.size))
    return Ellipsoid(ctrl.x_eq, ctrl.P, ctrl.level).boundary_points(dirs)


def falsify_invariance(sys, ctrl, Yk, U, n_samples=100, steps=200, rng=None, rtol=1e-9):
    """Count boundary-started closed-loop runs that break invariance or a constraint.

    Each run starts on the boundary of the invariant set and is checked at
    every step for a Lyapunov increase, leaving the set, an input outside
    ``U`` or an output outside ``Y_k``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    X = boundary_states(ctrl, n_samples, rng)
    Acl = sys.A + sys.B @ ctrl.F
    level = ctrl.level
    bad = np.zeros(n_samples, dtype=bool)
    E = X - ctrl.x_eq
    v_prev = np.einsum("ij,jk,ik->i", E, ctrl.P, E)
    u_tol = rtol * (1.0 + np.abs(U.K))
    y_tol = rtol * (1.0 + np.abs(Yk.K))
    for _ in range(steps + 1):
        Uin = E @ ctrl.F.T + ctrl.u_eq
        Yout = (E + ctrl.x_eq) @ sys.C.T
        v = np.einsum("ij,jk,ik->i", E, ctrl.P, E)
        bad |= v > level * (1.0 + rtol)
        bad |= v > v_prev * (1.0 + rtol) + level * 1e-15
        bad |= np.any(Uin @ U.H.T - U.K > u_tol, axis=1)
        bad |= np.any(Yout @ Yk.H.T - Yk.K > y_tol, axis=1)
        v_prev = v
        E = E @ Acl.T
    return int(np.sum(bad))


def verify_synthesis(sys, ctrl, Yk, U, n_samples=100, steps=200, rng=None):
    """Independent certificate of invariance and constraint satisfaction; never raises."""
    P = ctrl.P / ctrl.level
    Acl = sys.A + sys.B @ ctrl.F
    L = np.linalg.cholesky(P)
    At = L.T @ Acl @ np.linalg.inv(L.T)
    inv_margin = 1.0 - float(np.linalg.norm(At, 2) ** 2)
    su = _slacks(U, ctrl.u_eq)
    sy = _slacks(Yk, ctrl.y_eq)
    nu = transformed_row_norms(U.H, ctrl.F, P)
    ny = transformed_row_norms(Yk.H, sys.C, P)
    with np.errstate(divide="ignore", invalid="ignore"):
        in_m = np.where(su > 0, (su - nu) / np.abs(su), -np.inf)
        out_m = np.where(sy > 0, (sy - ny) / np.abs(sy), -np.inf)
    rho_sp = float(np.max(np.abs(np.linalg.eigvals(Acl))))
    fals = falsify_invariance(sys, ctrl, Yk, U, n_samples, steps, rng) if n_samples else 0
    return VerificationReport(inv_margin, in_m, out_m, rho_sp, fals, n_samples)


def dump_problem(path, sys, eq, Yk, U, F=None):
    """Write one synthesis instance as labelled matrix blocks.

    Format: for each block a header line ``# name rows cols`` followed by
    whitespace-separated rows. Blocks are ``A``, ``B``, ``C``, ``x_eq``,
    ``u_eq``, ``y_eq``, ``H_u``, ``K_u``, ``H_y``, ``K_y`` and, for the
    fixed-gain program, ``F``.
    """
    blocks = [("A", sys.A), ("B", sys.B), ("C", sys.C), ("x_eq", eq.x), ("u_eq", eq.u),
              ("y_eq", eq.y), ("H_u", U.H), ("K_u", U.K), ("H_y", Yk.H), ("K_y", Yk.K)]
    if F is not None:
        blocks.append(("F", F))
    with open(path, "w") as fh:
        for name, M in blocks:
            M = np.atleast_2d(M)
            if name in ("x_eq", "u_eq", "y_eq", "K_u", "K_y"):
                M = M.reshape(-1, 1)
            fh.write(f"# {name} {M.shape[0]} {M.shape[1]}\n")
            for row in M:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_problem(path):
    blocks = {}
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    i = 0
    while i < len(lines):
        _, name, r, c = lines[i].split()
        r, c = int(r), int(c)
        blocks[name] = np.array([[float(v) for v in lines[i + 1 + j].split()] for j in range(r)])
        i += 1 + r
    return blocks
