"""Local affine state-feedback controllers and their ellipsoidal invariant sets."""

from dataclasses import dataclass, replace

import numpy as np

from .geometry import Ellipsoid, support_margins
from .lti import is_schur


@dataclass(frozen=True)
class LocalController:
    """``u = F (x - x_eq) + u_eq`` with invariant set ``(x - x_eq)' P (x - x_eq) <= rho**2``.

    ``component`` is the index of the output component the set was fitted
    to and ``method`` names the design route that produced it.
    """

    F: np.ndarray
    P: np.ndarray
    rho: float
    x_eq: np.ndarray
    u_eq: np.ndarray
    y_eq: np.ndarray
    component: int
    method: str = ""
    id: int = -1

    @property
    def level(self):
        return self.rho ** 2

    def with_id(self, i):
        return replace(self, id=i)

    def ellipsoid(self):
        return Ellipsoid(self.x_eq, self.P, self.level)

    def value(self, x):
        e = np.asarray(x, dtype=float) - self.x_eq
        return float(e @ self.P @ e)

    def contains(self, x, eps=0.0):
        """Membership in the invariant set, shrunk by the relative margin ``eps``."""
        return self.value(x) <= self.level * (1.0 - eps)

    def control(self, x):
        return self.F @ (np.asarray(x, dtype=float) - self.x_eq) + self.u_eq


def constraint_margins(sys, ctrl, Yk, U):
    """Support-function margins of the invariant set against ``Y_k`` (via ``C``) and ``U`` (via ``F``).

    Nonnegative entries certify ``C O ⊆ Y_k`` and ``F (O - x_eq) + u_eq ⊆ U``.
    """
    ell = ctrl.ellipsoid()
    out = support_margins(ell, Yk, sys.C)
    inp = support_margins(ell, U, ctrl.F, ctrl.u_eq - ctrl.F @ ctrl.x_eq)
    return out, inp


def is_certified(sys, ctrl, Yk, U, rtol=1e-9):
    out, inp = constraint_margins(sys, ctrl, Yk, U)
    ok_out = np.all(out >= -rtol * (1.0 + np.abs(Yk.K)))
    ok_in = np.all(inp >= -rtol * (1.0 + np.abs(U.K)))
    return bool(ok_out and ok_in and is_schur(sys.A + sys.B @ ctrl.F))
