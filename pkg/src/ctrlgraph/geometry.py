"""Half-space polytopes, ellipsoids and the containment tests built on them."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionError, EmptySet, NotPositiveDefinite, Unbounded

# radius threshold for "non-empty interior"
EPS_INTERIOR = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Polytope:
    """The set ``{y : H y <= K}``."""

    H: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        K = np.asarray(self.K, dtype=float).reshape(-1)
        if H.shape[0] != K.shape[0]:
            raise DimensionError(f"H has {H.shape[0]} rows but K has {K.shape[0]} entries")
        if np.any(np.linalg.norm(H, axis=1) == 0.0):
            raise ValueError("polytope rows must have nonzero norm")
        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "K", _frozen(K))

    @classmethod
    def box(cls, lower, upper):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        n = lower.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    @property
    def dim(self):
        return self.H.shape[1]

    @property
    def n_rows(self):
        return self.H.shape[0]

    def row_norms(self):
        return np.linalg.norm(self.H, axis=1)

    def slack(self, y):
        """Per-row slack ``K - H y``."""
        return self.K - self.H @ np.asarray(y, dtype=float)

    def contains(self, y, tol=0.0):
        return bool(np.all(self.slack(y) >= -tol))

    def contains_strictly(self, y, margin=EPS_INTERIOR):
        return bool(np.all(self.slack(y) > margin))

    def intersect(self, other):
        if other.dim != self.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.K, other.K]))

    def support(self, direction):
        """max ``direction . y`` over the set; ``inf`` when unbounded."""
        d = np.asarray(direction, dtype=float)
        res = linprog(-d, A_ub=self.H, b_ub=self.K, bounds=[(None, None)] * self.dim,
                      method="highs")
        if res.status == 2:
            raise EmptySet("polytope is empty")
        if res.status == 3:
            return np.inf
        return -res.fun

    def is_bounded(self):
        eye = np.eye(self.dim)
        return all(np.isfinite(self.support(s * e)) for e in eye for s in (1.0, -1.0))

    def bounding_box(self):
        eye = np.eye(self.dim)
        hi = np.array([self.support(e) for e in eye])
        lo = np.array([-self.support(-e) for e in eye])
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise Unbounded("polytope is unbounded")
        return lo, hi

    def __eq__(self, other):
        if not isinstance(other, Polytope):
            return NotImplemented
        return (self.H.shape == other.H.shape and np.array_equal(self.H, other.H)
                and np.array_equal(self.K, other.K))

    __hash__ = None


def _chebyshev_lp(poly):
    n = poly.dim
    norms = poly.row_norms()
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([poly.H, norms[:, None]])
    res = linprog(c, A_ub=A_ub, b_ub=poly.K, bounds=[(None, None)] * (n + 1), method="highs")
    if res.status == 3:
        raise Unbounded("Chebyshev radius is unbounded")
    if res.status != 0:
        raise EmptySet(f"Chebyshev LP failed: {res.message}")
    return res.x[:n], float(res.x[n])


def chebyshev(poly, canonical=True):
    """Center and radius of the largest ball inscribed in ``poly``.

    The optimal center is generally not unique (a long box has a segment of
    them). With ``canonical`` the returned center is the midpoint, per
    coordinate, of the set of optimal centers, which makes the answer
    independent of the LP solver's vertex choice.

    Raises ``EmptySet`` when the polytope has no points and ``Unbounded``
    when balls of any radius fit.
    """
    center, radius = _chebyshev_lp(poly)
    if radius < 0.0:
        raise EmptySet("polytope is empty")
    radius = max(radius, 0.0)
    if canonical and radius > 0.0:
        # centers whose ball radius is still optimal up to a relative 1e-12
        r = radius * (1.0 - 1e-12)
        face = Polytope(poly.H, poly.K - r * poly.row_norms())
        lo, hi = face.bounding_box()
        center = 0.5 * (lo + hi)
    return center, radius


def intersection_interior_nonempty(a, b, eps=EPS_INTERIOR):
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    try:
        _, radius = _chebyshev_lp(a.intersect(b))
    except Unbounded:
        return True
    return radius > eps


@dataclass(frozen=True)
class UnionOfPolytopes:
    """Finite union of full-dimensional compact polytopes in a common space."""

    components: tuple
    _validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a union needs at least one component")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise DimensionError(f"components live in different dimensions {sorted(dims)}")
        if self._validate:
            for k, comp in enumerate(comps):
                if not comp.is_bounded():
                    raise Unbounded(f"component {k} is unbounded")
                _, r = chebyshev(comp)
                if r <= EPS_INTERIOR:
                    raise EmptySet(f"component {k} is not full-dimensional")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return self.components[0].dim

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, k):
        return self.components[k]

    def contains(self, y, tol=0.0):
        return any(c.contains(y, tol) for c in self.components)

    def containing(self, y, margin=EPS_INTERIOR):
        """Indices of components holding ``y`` strictly inside."""
        return [k for k, c in enumerate(self.components) if c.contains_strictly(y, margin)]

    def bounding_box(self):
        boxes = [c.bounding_box() for c in self.components]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return lo, hi


def _check_pd(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"shape matrix must be square, got {P.shape}")
    scale = max(1.0, float(np.max(np.abs(P))))
    if np.max(np.abs(P - P.T)) > 1e-10 * scale:
        raise NotPositiveDefinite("shape matrix is not symmetric")
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("shape matrix is not positive definite") from None
    if np.min(np.linalg.eigvalsh(P)) <= 0.0:
        raise NotPositiveDefinite("shape matrix is not positive definite")
    return P


@dataclass(frozen=True)
class Ellipsoid:
    """``{x : (x - center)' P (x - center) <= level}`` with ``level = rho**2``."""

    center: np.ndarray
    P: np.ndarray
    level: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        P = _check_pd(self.P)
        if P.shape[0] != c.size:
            raise DimensionError(f"center has {c.size} entries, shape is {P.shape}")
        if not self.level > 0.0:
            raise ValueError("ellipsoid level must be positive")
        object.__setattr__(self, "center", _frozen(c))
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "level", float(self.level))

    @property
    def dim(self):
        return self.center.size

    @property
    def rho(self):
        return float(np.sqrt(self.level))

    def value(self, x):
        e = np.asarray(x, dtype=float) - self.center
        return float(e @ self.P @ e)

    def contains(self, x, rtol=0.0):
        return self.value(x) <= self.level * (1.0 + rtol)

    def inv_sqrt(self):
        """A factor ``L`` with ``L L' = P^{-1}`` (upper-triangular inverse Cholesky)."""
        L = np.linalg.cholesky(self.P)
        return np.linalg.inv(L).T

    def boundary_points(self, directions):
        """Map unit vectors (rows) onto the ellipsoid surface."""
        d = np.atleast_2d(directions)
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        return self.center + self.rho * d @ self.inv_sqrt().T

    def scaled(self, level):
        return Ellipsoid(self.center, self.P, level)


def transformed_row_norms(H, M, P):
    """Row norms ``||H_j M P^{-1/2}||_2``."""
    L = np.linalg.cholesky(np.asarray(P, dtype=float))
    V = np.linalg.solve(L, (np.atleast_2d(H) @ np.atleast_2d(M)).T)
    return np.linalg.norm(V, axis=0)


def support_margins(ell, poly, M=None, offset=None):
    """Per-row margins ``K - H(M c + b) - rho ||H M P^{-1/2}||`` of the image ``M ell + b``."""
    M = np.eye(ell.dim) if M is None else np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != ell.dim or M.shape[0] != poly.dim:
        raise DimensionError(f"map of shape {M.shape} does not send R^{ell.dim} into R^{poly.dim}")
    image_center = M @ ell.center
    if offset is not None:
        image_center = image_center + np.asarray(offset, dtype=float)
    return poly.K - poly.H @ image_center - ell.rho * transformed_row_norms(poly.H, M, ell.P)


def ellipsoid_in_polytope(ell, poly, M=None, offset=None, rtol=1e-12):
    margins = support_margins(ell, poly, M, offset)
    return bool(np.all(margins >= -rtol * (1.0 + np.abs(poly.K))))


def normalize_with_mask(poly, M=None, P=None, tol=1e-14):
    """Scale rows so ``||H_j M P^{-1/2}|| = 1``.

    Rows whose transformed norm vanishes are left untouched and reported in
    the returned boolean mask; they carry no bound on the ellipsoid radius.
    """
    n = poly.dim
    M = np.eye(n) if M is None else np.atleast_2d(M)
    P = np.eye(M.shape[1]) if P is None else P
    norms = transformed_row_norms(poly.H, M, P)
    inactive = norms <= tol * max(1.0, float(np.max(norms, initial=0.0)))
    scale = np.where(inactive, 1.0, norms)
    return Polytope(poly.H / scale[:, None], poly.K / scale), inactive


def normalize(poly, M=None, P=None):
    return normalize_with_mask(poly, M, P)[0]
