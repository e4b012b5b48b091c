"""Concrete geodesic model spaces: Euclidean, chordal circle/sphere, hyperboloid, finite.

Points are plain numpy float arrays (an integer index for finite spaces).
The hyperboloid model of H^n lives in Minkowski space R^{n,1} with signature
(-,+,...,+); a point x satisfies <x,x> = -1 and x[0] > 0.  Circle and sphere
carry the chordal (extrinsic) metric; the intrinsic arc length on the circle
is exposed separately as a helper for the arc-midpoint barycenter rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAngle,
    DegenerateGeodesic,
    InvalidCoordinates,
    InvalidIsometry,
    NonConvergence,
)

DEFAULT_TOL = 1e-9

EUCLIDEAN = "euclidean"
CIRCLE = "circle"
SPHERE = "sphere"
HYPERBOLOID = "hyperboloid"
FINITE = "finite"


def minkowski_dot(x, y):
    """Minkowski inner product with signature (-,+,...,+)."""
    return float(np.dot(x[1:], y[1:]) - x[0] * y[0])


@dataclass(frozen=True)
class ModelSpace:
    kind: str
    dim: int
    radius: float = 1.0
    matrix: np.ndarray | None = field(default=None, compare=False)
    tol: float = DEFAULT_TOL

    @staticmethod
    def euclidean(dim, tol=DEFAULT_TOL):
        return ModelSpace(EUCLIDEAN, dim, tol=tol)

    @staticmethod
    def circle(radius=1.0, tol=DEFAULT_TOL):
        return ModelSpace(CIRCLE, 1, radius=radius, tol=tol)

    @staticmethod
    def sphere(dim, radius=1.0, tol=DEFAULT_TOL):
        return ModelSpace(SPHERE, dim, radius=radius, tol=tol)

    @staticmethod
    def hyperboloid(dim, tol=DEFAULT_TOL):
        return ModelSpace(HYPERBOLOID, dim, tol=tol)

    @staticmethod
    def finite(matrix, tol=DEFAULT_TOL):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidCoordinates("finite space needs a square distance matrix")
        if np.max(np.abs(m - m.T)) > tol or np.max(np.abs(np.diag(m))) > tol:
            raise InvalidCoordinates("distance matrix must be symmetric with zero diagonal")
        n = m.shape[0]
        for i in range(n):
            # d(j,k) <= d(j,i) + d(i,k) for all j, k
            if np.min(m[:, i][:, None] + m[i, :][None, :] - m) < -tol:
                raise InvalidCoordinates("distance matrix violates the triangle inequality")
        return ModelSpace(FINITE, n, matrix=m, tol=tol)

    @property
    def ambient_dim(self):
        if self.kind == EUCLIDEAN:
            return self.dim
        if self.kind == CIRCLE:
            return 2
        if self.kind in (SPHERE, HYPERBOLOID):
            return self.dim + 1
        raise ValueError(f"no ambient dimension for kind {self.kind}")

    @property
    def is_geodesic(self):
        # circle counts as-arc, for flow purposes only
        return self.kind in (EUCLIDEAN, HYPERBOLOID, CIRCLE)

    @property
    def is_cat0(self):
        return self.kind in (EUCLIDEAN, HYPERBOLOID)

    def check_point(self, x):
        if self.kind == FINITE:
            i = int(x)
            if not 0 <= i < self.dim:
                raise InvalidCoordinates(f"finite index {i} out of range [0,{self.dim})")
            return
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise InvalidCoordinates(
                f"expected {self.ambient_dim} coordinates for {self.kind}, got shape {x.shape}")
        if self.kind == HYPERBOLOID:
            norm = minkowski_dot(x, x)
            if abs(norm + 1.0) > 100 * self.tol or x[0] <= 0:
                raise InvalidCoordinates(
                    f"hyperboloid point has Minkowski norm {norm:.3e}, x0={x[0]:.3e}")
        elif self.kind in (CIRCLE, SPHERE):
            r = float(np.linalg.norm(x))
            if abs(r - self.radius) > 100 * self.tol:
                raise InvalidCoordinates(f"point at radius {r}, expected {self.radius}")

    def point(self, coords):
        """Validate and return coordinates as an immutable point array."""
        if self.kind == FINITE:
            self.check_point(coords)
            return int(coords)
        x = np.asarray(coords, dtype=float)
        self.check_point(x)
        x.flags.writeable = False
        return x

    def to_json(self):
        doc = {"kind": self.kind, "dim": self.dim}
        if self.kind in (CIRCLE, SPHERE):
            doc["radius"] = self.radius
        if self.kind == FINITE:
            doc["matrix"] = self.matrix.tolist()
        return doc

    @staticmethod
    def from_json(doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        kind = doc["kind"]
        if kind == EUCLIDEAN:
            return ModelSpace.euclidean(doc["dim"])
        if kind == CIRCLE:
            return ModelSpace.circle(doc.get("radius", 1.0))
        if kind == SPHERE:
            return ModelSpace.sphere(doc["dim"], doc.get("radius", 1.0))
        if kind == HYPERBOLOID:
            return ModelSpace.hyperboloid(doc["dim"])
        if kind == FINITE:
            return ModelSpace.finite(doc["matrix"])
        raise ValueError(f"unknown space kind {kind!r}")


def _hyperboloid_dist_from_diff(diff):
    """d = 2 asinh(|x-y|_M / 2); cancellation-free for nearby points since
    <x-y, x-y>_M = 2(cosh d - 1) is computed from the difference vector."""
    if diff.ndim == 1:
        msq = float(np.dot(diff[1:], diff[1:]) - diff[0] * diff[0])
        return 2.0 * math.asinh(0.5 * math.sqrt(max(msq, 0.0)))
    msq = np.sum(diff[..., 1:] ** 2, axis=-1) - diff[..., 0] ** 2
    return 2.0 * np.arcsinh(0.5 * np.sqrt(np.maximum(msq, 0.0)))


def distance(space, x, y):
    """Metric of the model space (chordal for circle/sphere)."""
    if space.kind == FINITE:
        return float(space.matrix[int(x), int(y)])
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if space.kind == HYPERBOLOID:
        return _hyperboloid_dist_from_diff(x - y)
    return float(np.linalg.norm(x - y))


def distances_to(space, points, y):
    """Vectorized d(p, y) over an (m, ambient) array of points."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros(0)
    if space.kind == FINITE:
        return space.matrix[np.asarray(points, dtype=int), int(y)]
    y = np.asarray(y, dtype=float)
    if space.kind == HYPERBOLOID:
        return _hyperboloid_dist_from_diff(pts - y[None, :])
    return np.linalg.norm(pts - y[None, :], axis=1)


def cross_distances(space, A, B):
    """Matrix of d(a_i, b_j) for point arrays A (m) and B (n)."""
    if space.kind == FINITE:
        return space.matrix[np.ix_(np.asarray(A, int), np.asarray(B, int))]
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if space.kind == HYPERBOLOID:
        return _hyperboloid_dist_from_diff(A[:, None, :] - B[None, :, :])
    diff = A[:, None, :] - B[None, :, :]
    return np.linalg.norm(diff, axis=2)


def pairwise_diameter(space, points):
    """max_{i,j} d(p_i, p_j); 0 for fewer than two points."""
    pts = list(points)
    if len(pts) < 2:
        return 0.0
    if len(pts) == 2:
        return distance(space, pts[0], pts[1])
    if space.kind == FINITE:
        idx = np.asarray(pts, dtype=int)
        return float(np.max(space.matrix[np.ix_(idx, idx)]))
    arr = np.asarray(pts, dtype=float)
    if space.kind == HYPERBOLOID:
        return float(np.max(_hyperboloid_dist_from_diff(
            arr[:, None, :] - arr[None, :, :])))
    diff = arr[:, None, :] - arr[None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=2)))


def _hyperboloid_unit_tangent(x, y, d=None):
    """Unit tangent at x pointing toward y (x, y on the hyperboloid)."""
    if d is None:
        d = distance(ModelSpace.hyperboloid(len(x) - 1), x, y)
    v = y + minkowski_dot(x, y) * x
    s = math.sinh(d)
    if s == 0.0:
        raise DegenerateGeodesic("coincident points have no tangent direction")
    return v / s


def hyperboloid_tangent_frame(p):
    """Orthonormal tangent frame (e1, e2) at a point of the 2-hyperboloid.

    (p1, p0, 0) is always spacelike and Minkowski-orthogonal to p, since
    <e1,e1> = p0^2 - p1^2 = 1 + p2^2.
    """
    p = np.asarray(p, dtype=float)
    e1 = np.array([p[1], p[0], 0.0])
    e1 = e1 / math.sqrt(minkowski_dot(e1, e1))
    e2 = np.array([0.0, 0.0, 1.0])
    e2 = e2 + minkowski_dot(e2, p) * p
    e2 = e2 - minkowski_dot(e2, e1) * e1
    e2 = e2 / math.sqrt(minkowski_dot(e2, e2))
    return e1, e2


def circle_angle(space, x):
    return math.atan2(x[1], x[0])


def arc_distance(space, x, y):
    """Intrinsic arc-length distance on the circle (helper metric)."""
    if space.kind != CIRCLE:
        raise ValueError("arc_distance is defined for circle spaces only")
    a = circle_angle(space, x)
    b = circle_angle(space, y)
    delta = abs(math.remainder(b - a, 2.0 * math.pi))
    return space.radius * delta


def circle_point(space, theta):
    return space.point([space.radius * math.cos(theta), space.radius * math.sin(theta)])


def geodesic_point(space, x, y, t):
    """Point at arc length t on the unit-speed geodesic from x to y.

    Euclidean and hyperboloid geodesics extend beyond [0, d(x,y)]; the circle
    is parametrised by intrinsic arc length along the shorter arc.
    """
    if not space.is_geodesic:
        raise ValueError(f"space kind {space.kind} is not geodesic")
    if t == 0.0:
        return x
    d_here = arc_distance(space, x, y) if space.kind == CIRCLE else distance(space, x, y)
    if d_here <= space.tol:
        raise DegenerateGeodesic("x = y but t != 0")
    if space.kind == EUCLIDEAN:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x + (t / d_here) * (y - x)
    if space.kind == HYPERBOLOID:
        u = _hyperboloid_unit_tangent(x, y, d_here)
        p = math.cosh(t) * np.asarray(x, dtype=float) + math.sinh(t) * u
        return p
    # circle: move along the shorter arc from x toward y
    a = circle_angle(space, x)
    b = circle_angle(space, y)
    delta = math.remainder(b - a, 2.0 * math.pi)
    sign = 1.0 if delta >= 0 else -1.0
    return circle_point(space, a + sign * t / space.radius)


def angle_at(space, o, p, q):
    """Riemannian angle at o between the geodesics toward p and toward q."""
    d_op = distance(space, o, p)
    d_oq = distance(space, o, q)
    if d_op <= space.tol or d_oq <= space.tol:
        raise DegenerateAngle("angle undefined when o coincides with p or q")
    if distance(space, p, q) <= space.tol:
        return 0.0  # identical rays
    if space.kind == EUCLIDEAN:
        u = (np.asarray(p, float) - o) / d_op
        v = (np.asarray(q, float) - o) / d_oq
        return math.acos(min(1.0, max(-1.0, float(np.dot(u, v)))))
    if space.kind == HYPERBOLOID:
        u = _hyperboloid_unit_tangent(np.asarray(o, float), np.asarray(p, float), d_op)
        v = _hyperboloid_unit_tangent(np.asarray(o, float), np.asarray(q, float), d_oq)
        return math.acos(min(1.0, max(-1.0, minkowski_dot(u, v))))
    if space.kind in (CIRCLE, SPHERE):
        o = np.asarray(o, float)
        r2 = float(np.dot(o, o))
        u = np.asarray(p, float) - (np.dot(p, o) / r2) * o
        v = np.asarray(q, float) - (np.dot(q, o) / r2) * o
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu <= space.tol or nv <= space.tol:
            raise DegenerateAngle("antipodal ray direction is ambiguous")
        return math.acos(min(1.0, max(-1.0, float(np.dot(u, v) / (nu * nv)))))
    raise ValueError(f"angles not defined for kind {space.kind}")


@dataclass(frozen=True)
class BoundaryPoint:
    """Ideal endpoint of a geodesic ray, encoded as a unit direction vector."""

    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-7:
            raise InvalidCoordinates(f"boundary direction has norm {n}, expected 1")
        d = d / n
        d.flags.writeable = False
        object.__setattr__(self, "direction", d)


def ray_point(space, o, xi, t):
    """Point at parameter t on the unit-speed ray from o toward boundary point xi."""
    if space.kind == EUCLIDEAN:
        return np.asarray(o, float) + t * xi.direction
    if space.kind != HYPERBOLOID:
        raise ValueError("rays to the boundary need a Euclidean or hyperboloid space")
    o = np.asarray(o, dtype=float)
    ell = np.concatenate(([1.0], xi.direction))  # null vector of the ideal class
    s = minkowski_dot(ell, o)
    u = -ell / s - o  # unit tangent at o; <u,u>=1, <u,o>=0
    return math.cosh(t) * o + math.sinh(t) * u


def boundary_point_of_ray(space, o, x):
    """Ideal endpoint of the geodesic ray from o through x."""
    if space.kind == EUCLIDEAN:
        v = np.asarray(x, float) - o
        n = np.linalg.norm(v)
        if n <= space.tol:
            raise DegenerateGeodesic("ray direction undefined for coincident points")
        return BoundaryPoint(v / n)
    if space.kind != HYPERBOLOID:
        raise ValueError("boundary points need a Euclidean or hyperboloid space")
    o = np.asarray(o, dtype=float)
    u = _hyperboloid_unit_tangent(o, np.asarray(x, float))
    ell = o + u  # null: the ray cosh(t) o + sinh(t) u ~ (e^t/2) (o+u)
    return BoundaryPoint(ell[1:] / ell[0])


GROMOV_T_MAX = float(2 ** 40)


def gromov_product(space, o, xi, eta):
    """(xi|eta)_o = lim_t t - d(gamma_{o xi}(t), gamma_{o eta}(t))/2.

    Evaluated by doubling t from 1 until successive values differ by < tol;
    +inf when the two boundary points coincide.
    """
    if space.kind != HYPERBOLOID:
        raise ValueError("the Gromov product is computed on hyperboloid spaces")
    if np.linalg.norm(xi.direction - eta.direction) <= space.tol:
        return math.inf
    t = 1.0
    prev = t - 0.5 * distance(space, ray_point(space, o, xi, t), ray_point(space, o, eta, t))
    while t <= GROMOV_T_MAX:
        t *= 2.0
        cur = t - 0.5 * distance(space, ray_point(space, o, xi, t), ray_point(space, o, eta, t))
        if abs(cur - prev) < space.tol:
            return cur
        prev = cur
    raise NonConvergence(f"Gromov product did not converge below t = {GROMOV_T_MAX}")


def visual_metric(space, o, xi, eta):
    """rho_o(xi, eta) = exp(-(xi|eta)_o); 0 when xi = eta."""
    g = gromov_product(space, o, xi, eta)
    return 0.0 if math.isinf(g) else math.exp(-g)


@dataclass(frozen=True)
class Isometry:
    """Linear (plus translation, for Euclidean) map preserving the model form."""

    kind: str
    matrix: np.ndarray
    translation: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if self.translation is not None:
            t = np.asarray(self.translation, dtype=float)
            t.flags.writeable = False
            object.__setattr__(self, "translation", t)

    @staticmethod
    def identity(space):
        n = space.ambient_dim
        t = np.zeros(n) if space.kind == EUCLIDEAN else None
        return Isometry(space.kind, np.eye(n), t)

    @staticmethod
    def euclidean_translation(v):
        v = np.asarray(v, dtype=float)
        return Isometry(EUCLIDEAN, np.eye(len(v)), v)

    @staticmethod
    def euclidean_rotation(theta, dim=2, axes=(0, 1)):
        m = np.eye(dim)
        i, j = axes
        c, s = math.cos(theta), math.sin(theta)
        m[i, i] = c
        m[i, j] = -s
        m[j, i] = s
        m[j, j] = c
        return Isometry(EUCLIDEAN, m, np.zeros(dim))

    @staticmethod
    def orthogonal(kind, matrix):
        m = np.asarray(matrix, dtype=float)
        return Isometry(kind, m, np.zeros(m.shape[0]) if kind == EUCLIDEAN else None)

    @staticmethod
    def hyperbolic_boost(length, dim=2):
        """Translation of length `length` along the first-coordinate axis geodesic."""
        m = np.eye(dim + 1)
        c, s = math.cosh(length), math.sinh(length)
        m[0, 0] = c
        m[0, 1] = s
        m[1, 0] = s
        m[1, 1] = c
        return Isometry(HYPERBOLOID, m)

    @staticmethod
    def hyperbolic_rotation(theta, dim=2):
        """Rotation about the basepoint (1, 0, ..., 0)."""
        m = np.eye(dim + 1)
        c, s = math.cos(theta), math.sin(theta)
        m[1, 1] = c
        m[1, 2] = -s
        m[2, 1] = s
        m[2, 2] = c
        return Isometry(HYPERBOLOID, m)

    def validate(self, space, tol=None):
        tol = tol if tol is not None else space.tol
        m = self.matrix
        if space.kind == HYPERBOLOID:
            j = np.diag([-1.0] + [1.0] * space.dim)
            if np.max(np.abs(m.T @ j @ m - j)) > 1e4 * tol:
                raise InvalidIsometry("matrix does not preserve the Minkowski form")
            if m[0, 0] <= 0:
                raise InvalidIsometry("matrix is not future-preserving")
        else:
            if np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) > 1e4 * tol:
                raise InvalidIsometry("matrix is not orthogonal")
        return self

    def apply(self, x):
        y = self.matrix @ np.asarray(x, dtype=float)
        if self.translation is not None:
            y = y + self.translation
        return y

    def apply_boundary(self, xi):
        if self.kind == EUCLIDEAN:
            return BoundaryPoint(self.matrix @ xi.direction)
        ell = self.matrix @ np.concatenate(([1.0], xi.direction))
        return BoundaryPoint(ell[1:] / ell[0])

    def compose(self, other):
        """self after other."""
        m = self.matrix @ other.matrix
        t = None
        if self.translation is not None:
            t = self.matrix @ other.translation + self.translation
        return Isometry(self.kind, m, t)

    def inverse(self):
        mi = np.linalg.inv(self.matrix)
        t = -(mi @ self.translation) if self.translation is not None else None
        return Isometry(self.kind, mi, t)

    def key(self, decimals=9):
        """Hashable rounded key for duplicate detection at tolerance."""
        # adding 0.0 flushes -0.0, whose bytes would differ from 0.0's
        parts = [(np.round(self.matrix, decimals) + 0.0).tobytes()]
        if self.translation is not None:
            parts.append((np.round(self.translation, decimals) + 0.0).tobytes())
        return b"|".join(parts)

    def to_json(self):
        doc = {"matrix": self.matrix.tolist()}
        if self.translation is not None:
            doc["translation"] = self.translation.tolist()
        return doc

    @staticmethod
    def from_json(kind, doc):
        return Isometry(kind, np.asarray(doc["matrix"], dtype=float),
                        np.asarray(doc["translation"], dtype=float)
                        if "translation" in doc else None)


def apply_isometry(g, x):
    """Apply g to a space point or a boundary point."""
    if isinstance(x, BoundaryPoint):
        return g.apply_boundary(x)
    return g.apply(x)
