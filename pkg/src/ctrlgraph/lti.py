"""Discrete-time LTI plant, equilibria, and the Riccati/Lyapunov solves."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NoEquilibrium, NoInteriorEquilibrium, NotStable, SolverFailure

EPS_SCHUR = 1e-9
RANK_RTOL = 1e-8


def _mat(a):
    a = np.atleast_2d(np.array(a, dtype=float))
    a.setflags(write=False)
    return a


def numeric_rank(M, rtol=RANK_RTOL):
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def controllability_matrix(A, B):
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


@dataclass(frozen=True)
class LTISystem:
    """``x+ = A x + B u``, ``y = C x``.

    ``Ac``, ``Bc`` and ``T`` record the continuous-time model when the
    system came from :func:`zoh_discretize`.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Ac: np.ndarray = None
    Bc: np.ndarray = None
    T: float = None
    check: bool = True

    def __post_init__(self):
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, _mat(getattr(self, name)))
        for name in ("Ac", "Bc"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _mat(getattr(self, name)))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise DimensionError(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.C.shape[1] != n:
            raise DimensionError(f"C has {self.C.shape[1]} columns, expected {n}")
        if self.check:
            if numeric_rank(controllability_matrix(self.A, self.B)) < n:
                raise ValueError("(A, B) is not controllable")
            if numeric_rank(self.C) < self.C.shape[0]:
                raise ValueError("C must have full row rank")

    @classmethod
    def from_continuous(cls, Ac, Bc, C, T):
        A, B = zoh_discretize(Ac, Bc, T)
        return cls(A, B, C, Ac=Ac, Bc=Bc, T=float(T))

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def nu(self):
        return self.B.shape[1]

    @property
    def ny(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class CostModel:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q, R = _mat(self.Q), _mat(self.R)
        if np.max(np.abs(Q - Q.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ValueError("Q must be symmetric")
        if np.max(np.abs(R - R.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(R))):
            raise ValueError("R must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12 * max(1.0, np.max(np.abs(Q))):
            raise ValueError("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(R)) <= 0.0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    def stage(self, dx, du):
        return float(dx @ self.Q @ dx + du @ self.R @ du)


@dataclass(frozen=True)
class Equilibrium:
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    unique: bool = True


@dataclass(frozen=True)
class EquilibriumFamily:
    """Affine set ``(x, u) = (x0, u0) + N z`` of equilibria with a common output."""

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    basis: np.ndarray

    unique = False

    @property
    def dim(self):
        return self.basis.shape[1]

    def member(self, z):
        xu = np.concatenate([self.x, self.u]) + self.basis @ np.asarray(z, dtype=float)
        n = self.x.size
        return Equilibrium(xu[:n], xu[n:], self.y, unique=False)


def zoh_discretize(Ac, Bc, T):
    """Zero-order-hold discretization through the augmented matrix exponential."""
    if not T > 0:
        raise ValueError("sample period must be positive")
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    Bc = np.atleast_2d(np.asarray(Bc, dtype=float))
    n, m = Bc.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = sla.expm(aug * T)
    return E[:n, :n], E[:n, n:]


def equilibrium_matrix(sys):
    n, m, p = sys.nx, sys.nu, sys.ny
    M = np.zeros((n + p, n + m))
    M[:n, :n] = sys.A - np.eye(n)
    M[:n, n:] = sys.B
    M[n:, :n] = sys.C
    return M


def equilibrium_for_output(sys, y, U=None, tol=1e-9):
    """Solve ``[A - I, B; C, 0] [x; u] = [0; y]``.

    Returns an :class:`Equilibrium` when the solution is unique, otherwise an
    :class:`EquilibriumFamily`. With ``U`` given, a unique equilibrium whose
    input is not interior to ``U`` raises ``NoInteriorEquilibrium``.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != sys.ny:
        raise DimensionError(f"output has {y.size} entries, expected {sys.ny}")
    n = sys.nx
    M = equilibrium_matrix(sys)
    rhs = np.concatenate([np.zeros(n), y])
    Uo, s, Vt = np.linalg.svd(M)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    xu = Vt[:rank].T @ ((Uo[:, :rank].T @ rhs) / s[:rank])
    if np.linalg.norm(M @ xu - rhs) > tol * (1.0 + np.linalg.norm(y)):
        raise NoEquilibrium(f"no equilibrium produces output {y}")
    x, u = xu[:n], xu[n:]
    if rank == M.shape[1]:
        # refine in the square case so residuals sit at machine precision
        if M.shape[0] == M.shape[1]:
            xu = np.linalg.solve(M, rhs)
            x, u = xu[:n], xu[n:]
        if U is not None and not U.contains_strictly(u, 0.0):
            raise NoInteriorEquilibrium(f"equilibrium input {u} is not interior to U")
        return Equilibrium(x, u, y, unique=True)
    basis = Vt[rank:].T
    return EquilibriumFamily(x, u, y, basis)


def is_schur(A, eps=EPS_SCHUR):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return bool(np.max(np.abs(np.linalg.eigvals(A))) < 1.0 - eps)


def spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(A)))))


def dare_residual(A, B, Q, R, P):
    """Relative residual of the discrete algebraic Riccati equation."""
    BtPA = B.T @ P @ A
    G = R + B.T @ P @ B
    res = A.T @ P @ A - P - BtPA.T @ np.linalg.solve(G, BtPA) + Q
    scale = np.linalg.norm(A.T @ P @ A) + np.linalg.norm(P) + np.linalg.norm(Q)
    return float(np.linalg.norm(res) / max(scale, np.finfo(float).tiny))


def lqr_gain(A, B, R, P):
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def solve_dare(sys, cost, tol=1e-8, max_refine=20):
    """Stabilizing DARE solution ``P`` and LQR gain ``F`` (``u = F x``).

    The Schur-method solution from SciPy is polished with Newton (Hewer)
    steps until the relative residual falls under ``tol``.
    """
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    try:
        P = sla.solve_discrete_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"DARE solver failed: {exc}") from exc
    P = 0.5 * (P + P.T)
    res = dare_residual(A, B, Q, R, P)
    for _ in range(max_refine):
        if res <= tol:
            break
        F = lqr_gain(A, B, R, P)
        Acl = A + B @ F
        if not is_schur(Acl, 0.0):
            break
        P_new = sla.solve_discrete_lyapunov(Acl.T, Q + F.T @ R @ F)
        P_new = 0.5 * (P_new + P_new.T)
        res_new = dare_residual(A, B, Q, R, P_new)
        if res_new >= res:
            break
        P, res = P_new, res_new
    if res > tol:
        raise SolverFailure(f"DARE residual {res:.3e} exceeds {tol:.1e}", residual=res, iterate=P)
    F = lqr_gain(A, B, R, P)
    if not is_schur(A + B @ F):
        raise SolverFailure("DARE closed loop is not Schur", residual=res, iterate=P)
    return P, F


def lyapunov_residual(A_cl, W, S):
    res = A_cl.T @ S @ A_cl - S + W
    scale = np.linalg.norm(S) + np.linalg.norm(W)
    return float(np.linalg.norm(res) / max(scale, np.finfo(float).tiny))


def solve_discrete_lyapunov(A_cl, W, tol=1e-9):
    """Solve ``A_cl' S A_cl - S = -W`` for Schur ``A_cl``."""
    A_cl = np.atleast_2d(np.asarray(A_cl, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if not is_schur(A_cl):
        raise NotStable(f"closed loop has spectral radius {spectral_radius(A_cl):.12g}")
    S = sla.solve_discrete_lyapunov(A_cl.T, W)
    S = 0.5 * (S + S.T)
    res = lyapunov_residual(A_cl, W, S)
    if res > tol:
        # one step of iterative refinement on the residual equation
        E = A_cl.T @ S @ A_cl - S + W
        S = S + sla.solve_discrete_lyapunov(A_cl.T, E)
        S = 0.5 * (S + S.T)
        res = lyapunov_residual(A_cl, W, S)
        if res > tol:
            raise SolverFailure(f"Lyapunov residual {res:.3e} exceeds {tol:.1e}", residual=res)
    return S


@dataclass(frozen=True)
class Trajectory:
    """States ``x[0..N]``, inputs ``u[0..N-1]`` and outputs ``y[0..N]``."""

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray

    @property
    def steps(self):
        return self.u.shape[0]


def simulate(sys, x0, policy, horizon):
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x = np.empty((horizon + 1, sys.nx))
    u = np.empty((horizon, sys.nu))
    x[0] = np.asarray(x0, dtype=float)
    for t in range(horizon):
        u[t] = policy(x[t])
        x[t + 1] = sys.A @ x[t] + sys.B @ u[t]
    return Trajectory(x, u, x @ sys.C.T)
