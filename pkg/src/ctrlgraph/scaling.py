"""Largest constraint-admissible level set of a shared quadratic Lyapunov function.

For a fixed gain ``F`` and Lyapunov matrix ``P`` each output sample gets the
largest ``rho`` such that the ellipsoid ``(x - x_eq)' P (x - x_eq) <= rho**2``
maps into the input set through the feedback law and into one output
component through ``C``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .controller import LocalController
from .errors import InfeasibleSample, OutsideFreeSpace, Unbounded
from .geometry import EPS_INTERIOR, transformed_row_norms
from .lti import Equilibrium, EquilibriumFamily, equilibrium_for_output

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class ScaledPISet:
    controller: LocalController
    rho: float
    component: int


def _inactive(norms, H, M, P):
    # numerically zero relative to the product of operator norms
    scale = np.linalg.norm(H, axis=1) * np.linalg.norm(M, 2) / np.sqrt(np.min(np.linalg.eigvalsh(P)))
    return norms <= 1e-14 * scale


def max_scale_lp(sys, F, P, y, Yk, U):
    """Solve the level-maximization LP over ``(rho, x_eq, u_eq)``.

    The equilibrium enters through equality constraints, so the LP also
    covers systems whose equilibrium for ``y`` is not unique. Returns
    ``(rho, x_eq, u_eq)``.
    """
    y = np.asarray(y, dtype=float)
    n, m = sys.nx, sys.nu
    nu_norms = transformed_row_norms(U.H, F, P)
    ny_norms = transformed_row_norms(Yk.H, sys.C, P)
    y_slack = Yk.K - Yk.H @ y
    if np.any(y_slack < 0.0):
        raise InfeasibleSample(f"sample {y} lies outside the output component")
    # variables [rho, x, u]
    nv = 1 + n + m
    c = np.zeros(nv)
    c[0] = -1.0
    A_in = np.zeros((U.n_rows, nv))
    A_in[:, 0] = nu_norms
    A_in[:, 1 + n:] = U.H
    A_out = np.zeros((Yk.n_rows, nv))
    A_out[:, 0] = ny_norms
    A_ub = np.vstack([A_in, A_out])
    b_ub = np.concatenate([U.K, y_slack])
    A_eq = np.zeros((n + sys.ny, nv))
    A_eq[:n, 1:1 + n] = sys.A - np.eye(n)
    A_eq[:n, 1 + n:] = sys.B
    A_eq[n:, 1:1 + n] = sys.C
    b_eq = np.concatenate([np.zeros(n), y])
    bounds = [(0.0, None)] + [(None, None)] * (n + m)
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs", options=_LP_OPTIONS)
    if res.status == 2:
        raise InfeasibleSample(f"no admissible equilibrium for sample {y}")
    if res.status == 3:
        raise Unbounded("level is unbounded; constraints do not restrict the ellipsoid")
    if res.status != 0:
        raise InfeasibleSample(f"level LP failed: {res.message}")
    return float(res.x[0]), res.x[1:1 + n], res.x[1 + n:]


def max_scale_closed_form(sys, F, P, x_eq, u_eq, y_eq, Yk, U):
    """Minimum over all constraint rows of slack divided by transformed row norm.

    Rows whose transformed norm vanishes do not bound the level and are
    skipped.
    """
    u_slack = U.K - U.H @ u_eq
    y_slack = Yk.K - Yk.H @ y_eq
    if np.any(u_slack < 0.0) or np.any(y_slack < 0.0):
        raise InfeasibleSample("equilibrium lies outside the constraint sets")
    nu_norms = transformed_row_norms(U.H, F, P)
    ny_norms = transformed_row_norms(Yk.H, sys.C, P)
    slack = np.concatenate([u_slack, y_slack])
    norms = np.concatenate([nu_norms, ny_norms])
    active = ~np.concatenate([_inactive(nu_norms, U.H, F, P), _inactive(ny_norms, Yk.H, sys.C, P)])
    if not np.any(active):
        raise Unbounded("no constraint row restricts the level")
    return float(np.min(slack[active] / norms[active]))


class FixedGainScaler:
    """Closed-form level computation with rows normalized once for shared ``F`` and ``P``.

    After normalization each evaluation costs one matrix-vector product per
    constraint set, the same work as a membership test.
    """

    def __init__(self, sys, F, P, Y, U, method="fixed-gain-lqr"):
        self.sys, self.F, self.P, self.Y, self.U = sys, np.asarray(F), np.asarray(P), Y, U
        self.method = method
        self._u_rows = self._normalized(U, self.F)
        self._y_rows = [self._normalized(Yk, sys.C) for Yk in Y]

    def _normalized(self, poly, M):
        norms = transformed_row_norms(poly.H, M, self.P)
        keep = ~_inactive(norms, poly.H, M, self.P)
        scale = np.where(keep, norms, 1.0)
        return poly.H / scale[:, None], poly.K / scale, keep

    @staticmethod
    def _ratio(rows, v):
        H, K, keep = rows
        slack = K - H @ v
        if np.any(slack < 0.0):
            raise InfeasibleSample("equilibrium lies outside the constraint sets")
        return np.min(slack[keep], initial=np.inf)

    def level(self, eq, k):
        rho = min(self._ratio(self._u_rows, eq.u), self._ratio(self._y_rows[k], eq.y))
        if not np.isfinite(rho):
            raise Unbounded("no constraint row restricts the level")
        return float(rho)

    def scale(self, y, components=None):
        """One :class:`ScaledPISet` per output component strictly containing ``y``."""
        return best_component_scale(self.sys, self.F, self.P, y, self.Y, self.U,
                                    components=components, method=self.method, _scaler=self)


def best_component_scale(sys, F, P, y, Y, U, components=None, method="fixed-gain-lqr",
                         _scaler=None):
    """Scale the shared level set separately against every component holding ``y``."""
    y = np.asarray(y, dtype=float)
    if components is None:
        components = Y.containing(y, EPS_INTERIOR)
    if not components:
        raise OutsideFreeSpace(f"sample {y} is in no output component")
    eq = equilibrium_for_output(sys, y)
    results = []
    for k in components:
        if isinstance(eq, EquilibriumFamily):
            rho, x_eq, u_eq = max_scale_lp(sys, F, P, y, Y[k], U)
            e = Equilibrium(x_eq, u_eq, y, unique=False)
        else:
            e = eq
            if _scaler is not None:
                rho = _scaler.level(e, k)
            else:
                rho = max_scale_closed_form(sys, F, P, e.x, e.u, e.y, Y[k], U)
        if not rho > 0.0:
            raise InfeasibleSample(f"sample {y} admits no positive level in component {k}")
        ctrl = LocalController(np.asarray(F), np.asarray(P), rho, e.x, e.u, y, k, method)
        results.append(ScaledPISet(ctrl, rho, k))
    return results


__all__ = [
    "ScaledPISet",
    "FixedGainScaler",
    "max_scale_lp",
    "max_scale_closed_form",
    "best_component_scale",
]
