"""Convex bodies in R^2/H^2, normal flow, push-off grids, and the boundary retraction.

The pipeline follows the constructive route: a boundary-tight push-off grid
obtained by flowing cover witnesses from the eps-level set to the R-level set,
an equivariant lambda-shrinking subdivision of the nerve, a push-off map by
geodesic coning over the subdivided nerve, and the retraction r(q) = the
unique point where the geodesic from q to the push-off image of q's nerve
projection crosses the eps-level set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import covers, simplicial, spaces, subdivision
from .errors import (
    CalibrationError,
    PipelineInconsistency,
    PreconditionError,
    StagedPreconditionError,
    UndefinedNormal,
)

ALPHA_DEFAULT = math.pi


def _mdot_rows(A, B):
    return np.sum(A[:, 1:] * B[:, 1:], axis=1) - A[:, 0] * B[:, 0]


# ---------------------------------------------------------------------------
# convex bodies


class ConvexBody:
    kind = "abstract"

    def __init__(self, space):
        self.space = space

    def project(self, x):
        raise NotImplementedError

    def project_batch(self, X):
        return np.asarray([self.project(x) for x in X])

    def dist(self, x):
        return spaces.distance(self.space, x, self.project(x))

    def dist_batch(self, X):
        X = np.asarray(X, float)
        P = self.project_batch(X)
        if self.space.kind == spaces.HYPERBOLOID:
            return spaces._hyperboloid_dist_from_diff(X - P)
        return np.linalg.norm(X - P, axis=1)

    def contains(self, x, slack=None):
        slack = self.space.tol if slack is None else slack
        return self.dist(x) <= slack


class PointBody(ConvexBody):
    kind = "point"

    def __init__(self, space, point):
        super().__init__(space)
        self.point = np.asarray(point, float)
        space.check_point(self.point)

    def project(self, x):
        return self.point

    def project_batch(self, X):
        return np.tile(self.point, (len(X), 1))

    def to_json(self):
        return {"type": "point", "point": self.point.tolist()}


class LineBody(ConvexBody):
    """Complete geodesic through two points (bi-infinite)."""

    kind = "line"

    def __init__(self, space, a, b):
        super().__init__(space)
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)
        if space.kind == spaces.EUCLIDEAN:
            u = self.b - self.a
            self.u = u / np.linalg.norm(u)
            self.normal = np.array([-self.u[1], self.u[0]])
        elif space.kind == spaces.HYPERBOLOID:
            c = np.cross(self.a, self.b)
            w = np.array([-c[0], c[1], c[2]])  # J @ cross: Minkowski normal
            nrm = spaces.minkowski_dot(w, w)
            if nrm <= 0:
                raise ValueError("points do not span a geodesic")
            self.normal = w / math.sqrt(nrm)
            d = spaces.distance(space, self.a, self.b)
            self.u = spaces._hyperboloid_unit_tangent(self.a, self.b, d)
        else:
            raise ValueError("line bodies live in Euclidean or hyperboloid planes")

    def param_point(self, s):
        """Unit-speed parametrization of the line."""
        if self.space.kind == spaces.EUCLIDEAN:
            return self.a + s * self.u
        return math.cosh(s) * self.a + math.sinh(s) * self.u

    def project(self, x):
        if self.space.kind == spaces.EUCLIDEAN:
            x = np.asarray(x, float)
            return self.a + float(np.dot(x - self.a, self.u)) * self.u
        s = spaces.minkowski_dot(np.asarray(x, float), self.normal)
        return (x - s * self.normal) / math.sqrt(1.0 + s * s)

    def project_batch(self, X):
        X = np.asarray(X, float)
        if self.space.kind == spaces.EUCLIDEAN:
            t = (X - self.a) @ self.u
            return self.a[None, :] + t[:, None] * self.u[None, :]
        s = _mdot_rows(X, np.tile(self.normal, (len(X), 1)))
        return (X - s[:, None] * self.normal[None, :]) / np.sqrt(1.0 + s * s)[:, None]

    def dist(self, x):
        if self.space.kind == spaces.HYPERBOLOID:
            return math.asinh(abs(spaces.minkowski_dot(np.asarray(x, float),
                                                       self.normal)))
        return super().dist(x)

    def side(self, x):
        """Sign of the displacement off the line (+1/-1/0)."""
        if self.space.kind == spaces.EUCLIDEAN:
            return float(np.sign(np.dot(np.asarray(x, float) - self.a, self.normal)))
        return float(np.sign(spaces.minkowski_dot(np.asarray(x, float), self.normal)))

    def to_json(self):
        return {"type": "line", "a": self.a.tolist(), "b": self.b.tolist()}


class SegmentBody(ConvexBody):
    kind = "segment"

    def __init__(self, space, a, b):
        super().__init__(space)
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)
        self.length = spaces.distance(space, self.a, self.b)
        self.line = LineBody(space, a, b)

    def param_point(self, s):
        return spaces.geodesic_point(self.space, self.a, self.b, s)

    def project(self, x):
        p = self.line.project(x)
        da = spaces.distance(self.space, self.a, p)
        db = spaces.distance(self.space, p, self.b)
        if da + db <= self.length + 100 * self.space.tol:
            return p
        return self.a if spaces.distance(self.space, x, self.a) <= \
            spaces.distance(self.space, x, self.b) else self.b

    def project_batch(self, X):
        if self.space.kind == spaces.EUCLIDEAN:
            X = np.asarray(X, float)
            t = np.clip((X - self.a) @ self.line.u, 0.0, self.length)
            return self.a[None, :] + t[:, None] * self.line.u[None, :]
        return super().project_batch(X)

    def to_json(self):
        return {"type": "segment", "a": self.a.tolist(), "b": self.b.tolist()}


class PolygonBody(ConvexBody):
    """Convex hull of finitely many points, as iterated half-plane data.

    Hyperbolic hulls use the Klein chart, where geodesics are straight chords
    and hyperbolic convexity coincides with Euclidean convexity.
    """

    kind = "polygon"

    def __init__(self, space, points):
        super().__init__(space)
        pts = [np.asarray(p, float) for p in points]
        if space.kind == spaces.EUCLIDEAN:
            chart = np.asarray(pts)
        elif space.kind == spaces.HYPERBOLOID:
            chart = np.asarray([p[1:] / p[0] for p in pts])
        else:
            raise ValueError("polygon bodies live in Euclidean or hyperboloid planes")
        hull_idx = _convex_hull_2d(chart)
        self.vertices = [pts[i] for i in hull_idx]
        self.chart = chart[hull_idx]
        self.edges = [SegmentBody(space, self.vertices[i],
                                  self.vertices[(i + 1) % len(self.vertices)])
                      for i in range(len(self.vertices))] \
            if len(self.vertices) >= 2 else []

    def _chart_point(self, x):
        if self.space.kind == spaces.EUCLIDEAN:
            return np.asarray(x, float)
        x = np.asarray(x, float)
        return x[1:] / x[0]

    def _inside_chart(self, c):
        n = len(self.chart)
        if n == 1:
            return bool(np.linalg.norm(c - self.chart[0]) <= 1e-14)
        sign = 0.0
        for i in range(n):
            a, b = self.chart[i], self.chart[(i + 1) % n]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if abs(cross) <= 1e-15:
                continue
            if sign == 0.0:
                sign = math.copysign(1.0, cross)
            elif math.copysign(1.0, cross) != sign:
                return False
        return True

    def project(self, x):
        if len(self.vertices) == 1:
            return self.vertices[0]
        if self._inside_chart(self._chart_point(x)):
            return np.asarray(x, float)
        best, best_d = None, math.inf
        for e in self.edges:
            p = e.project(x)
            d = spaces.distance(self.space, x, p)
            if d < best_d:
                best, best_d = p, d
        return best

    def to_json(self):
        return {"type": "polygon", "points": [v.tolist() for v in self.vertices]}


def _convex_hull_2d(points):
    """Andrew's monotone chain; returns hull vertex indices in ccw order."""
    order = sorted(range(len(points)), key=lambda i: (points[i][0], points[i][1]))
    if len(order) <= 2:
        return order

    def cross(o, a, b):
        return ((points[a][0] - points[o][0]) * (points[b][1] - points[o][1])
                - (points[a][1] - points[o][1]) * (points[b][0] - points[o][0]))

    lower = []
    for i in order:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], i) <= 1e-15:
            lower.pop()
        lower.append(i)
    upper = []
    for i in reversed(order):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], i) <= 1e-15:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def body_from_json(space, doc):
    t = doc["type"]
    if t == "point":
        return PointBody(space, doc["point"])
    if t == "line":
        return LineBody(space, doc["a"], doc["b"])
    if t == "segment":
        return SegmentBody(space, doc["a"], doc["b"])
    if t == "polygon":
        return PolygonBody(space, doc["points"])
    raise ValueError(f"unknown body type {t!r}")


def closest_point_projection(body, x):
    return body.project(x)


def dist_to_C(body, x):
    return body.dist(x)


# ---------------------------------------------------------------------------
# normal flow


def normal_flow(body, x, t):
    """Phi_N^t: move x outward along the geodesic through its projection."""
    d = body.dist(x)
    if d <= body.space.tol:
        raise UndefinedNormal("normal flow undefined on the body itself")
    if t < -(d - body.space.tol):
        raise PreconditionError(f"flow time {t} would cross the body (d={d})")
    if t == 0.0:
        return np.asarray(x, float)
    return spaces.geodesic_point(body.space, body.project(x), x, d + t)


def flow_to_infinity(body, x):
    """Ideal endpoint of the outward normal ray (hyperboloid spaces)."""
    if body.space.kind != spaces.HYPERBOLOID:
        raise ValueError("flow_to_infinity targets the visual boundary of H^n")
    d = body.dist(x)
    if d <= body.space.tol:
        raise UndefinedNormal("normal ray undefined on the body itself")
    return spaces.boundary_point_of_ray(body.space, body.project(x), x)


def angle_to_C(body, q, q_prime):
    """Angle at q between q' and the projection of q onto the body."""
    d = body.dist(q)
    if d <= body.space.tol:
        raise UndefinedNormal("angle to the body undefined on the body itself")
    return spaces.angle_at(body.space, q, q_prime, body.project(q))


def angle_to_C_batch(body, Q, q_prime):
    """Vectorized angle_to_C over rows of Q (2d Euclidean / hyperboloid)."""
    Q = np.asarray(Q, float)
    P = body.project_batch(Q)
    qp = np.asarray(q_prime, float)
    if body.space.kind == spaces.EUCLIDEAN:
        u1 = qp[None, :] - Q
        u2 = P - Q
        u1 = u1 / np.linalg.norm(u1, axis=1)[:, None]
        u2 = u2 / np.linalg.norm(u2, axis=1)[:, None]
        return np.arccos(np.clip(np.sum(u1 * u2, axis=1), -1.0, 1.0))
    QP = np.tile(qp, (len(Q), 1))
    c1 = _mdot_rows(Q, QP)
    c2 = _mdot_rows(Q, P)
    u1 = QP + c1[:, None] * Q
    u2 = P + c2[:, None] * Q
    s1 = np.sqrt(np.maximum(c1 * c1 - 1.0, 1e-300))
    s2 = np.sqrt(np.maximum(c2 * c2 - 1.0, 1e-300))
    cosang = _mdot_rows(u1, u2) / (s1 * s2)
    return np.arccos(np.clip(cosang, -1.0, 1.0))


def check_large_angle_escape(body, eps, q, q_prime, samples=100,
                             enforce_angle=True):
    """True iff the geodesic from q toward q' stays strictly outside the
    eps-neighborhood after leaving q (sampled); requires the angle > pi/2.

    enforce_angle=False runs the sampled check without the angle
    precondition, e.g. to demonstrate that small-angle directions re-enter.
    """
    tol = body.space.tol
    if abs(body.dist(q) - eps) > 100 * tol:
        raise PreconditionError("q does not lie on the eps-level set")
    if enforce_angle and angle_to_C(body, q, q_prime) <= math.pi / 2.0 + tol:
        raise PreconditionError("escape check requires an angle > pi/2")
    d = spaces.distance(body.space, q, q_prime)
    for t in np.linspace(d / samples, d, samples):
        pt = spaces.geodesic_point(body.space, q, q_prime, float(t))
        if body.dist(pt) <= eps:
            return False
    return True


# ---------------------------------------------------------------------------
# eps-neighborhood boundary parametrization


class EpsNeighborhood:
    """Sampler of the level set {d(., C) = eps}, parametrized by arc length."""

    def __init__(self, body, eps):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.body = body
        self.eps = eps
        self.space = body.space
        kind = (body.space.kind, body.kind)
        if kind == (spaces.EUCLIDEAN, "point"):
            self._components = {"circle": 2.0 * math.pi * eps}
        elif kind == (spaces.EUCLIDEAN, "line"):
            self._components = {"plus": math.inf, "minus": math.inf}
        elif kind == (spaces.EUCLIDEAN, "segment"):
            self._components = {"outer": 2.0 * body.length + 2.0 * math.pi * eps}
        elif kind == (spaces.HYPERBOLOID, "point"):
            self._components = {"circle": 2.0 * math.pi * math.sinh(eps)}
        elif kind == (spaces.HYPERBOLOID, "line"):
            self._components = {"plus": math.inf, "minus": math.inf}
        else:
            raise ValueError(f"no boundary parametrization for {kind}")

    def components(self):
        return sorted(self._components)

    def period(self, component):
        """Arc length of a closed component; inf for unbounded ones."""
        return self._components[component]

    def point(self, component, s):
        body, eps, space = self.body, self.eps, self.space
        if space.kind == spaces.EUCLIDEAN:
            if body.kind == "point":
                th = s / eps
                return body.point + eps * np.array([math.cos(th), math.sin(th)])
            if body.kind == "line":
                side = 1.0 if component == "plus" else -1.0
                return body.a + s * body.u + side * eps * body.normal
            if body.kind == "segment":
                return self._stadium_point(s)
        if body.kind == "point":  # hyperbolic circle
            p = body.point
            e1, e2 = spaces.hyperboloid_tangent_frame(p)
            th = s / math.sinh(eps)
            u = math.cos(th) * e1 + math.sin(th) * e2
            return math.cosh(eps) * p + math.sinh(eps) * u
        # hyperbolic equidistant curve: arc length s = cosh(eps) * axis length
        side = 1.0 if component == "plus" else -1.0
        s_axis = s / math.cosh(eps)
        foot = body.param_point(s_axis)
        return math.cosh(eps) * foot + math.sinh(eps) * side * body.normal

    def _stadium_point(self, s):
        body, eps = self.body, self.eps
        L = body.length
        cap = math.pi * eps
        s = s % (2.0 * L + 2.0 * cap)
        u, n = body.line.u, body.line.normal
        if s < L:  # top edge, a->b
            return body.a + s * u + eps * n
        s -= L
        if s < cap:  # cap around b, +n to -n
            th = s / eps
            d = math.cos(th) * n + math.sin(th) * u
            return body.b + eps * d
        s -= cap
        if s < L:  # bottom edge, b->a
            return body.b - s * u - eps * n
        s -= L
        th = s / eps  # cap around a, -n to +n
        d = -math.cos(th) * n - math.sin(th) * u
        return body.a + eps * d

    def samples(self, component, s_lo, s_hi, count, endpoint=False):
        ss = np.linspace(s_lo, s_hi, count, endpoint=endpoint)
        return [(float(s), self.point(component, float(s))) for s in ss]


# ---------------------------------------------------------------------------
# push-off grids


@dataclass
class GridVerification:
    alpha: float
    min_witness_angle: float
    push_off_distance: float
    max_element_diam: float
    boundary_map_diameter: float
    diam_iota: float

    def ok(self, angle_tol=1e-5):
        return (self.min_witness_angle >= self.alpha - angle_tol
                and self.push_off_distance > 0.0)


@dataclass
class PushOffGrid:
    body: ConvexBody
    eps: float
    R: float
    action: covers.GroupAction
    cover: covers.BallCover
    projector: covers.NerveProjector
    iota: simplicial.VertexMap
    boundary_flags: dict
    witnesses: dict  # boundary vertex -> (witness point, recorded angle)
    designated: np.ndarray | None
    delta: float
    delta_prime_target: float
    K_samples: list
    K_sigma_samples: list
    K_out_samples: list

    @property
    def nerve(self):
        return self.projector.nerve

    @property
    def adjacency(self):
        return self.projector.adj

    def boundary_edges(self):
        return [e for e in self.nerve.edges
                if self.boundary_flags.get(e[0]) and self.boundary_flags.get(e[1])]

    def push_off_distance(self):
        return min(self.body.dist(self.iota(v)) - self.eps
                   for v in self.nerve.vertices)

    def verify(self, alpha=ALPHA_DEFAULT):
        min_angle = min((a for _, a in self.witnesses.values()), default=math.pi)
        bdy_diam = 0.0
        for e in self.boundary_edges():
            bdy_diam = max(bdy_diam, spaces.distance(
                self.body.space, self.iota(e[0]), self.iota(e[1])))
        return GridVerification(
            alpha=alpha,
            min_witness_angle=min_angle,
            push_off_distance=self.push_off_distance(),
            max_element_diam=self.cover.max_diameter,
            boundary_map_diameter=bdy_diam,
            diam_iota=simplicial.map_diameter(self.nerve, self.iota),
        )


def calibrate_delta(neighborhood, component, s_lo, s_hi, flow_time, delta,
                    delta_prime, max_halvings=5):
    """Shrink delta until boundary points within 2*delta flow to within
    delta_prime of each other (sampled); the uniform-continuity constant
    linking delta to delta' is found empirically, not derived."""
    body = neighborhood.body
    for _ in range(max_halvings + 1):
        spacing = delta / 4.0
        count = max(8, int(math.ceil((s_hi - s_lo) / spacing)) + 1)
        pts = neighborhood.samples(component, s_lo, s_hi, count, endpoint=True)
        ok = True
        flowed = [normal_flow(body, p, flow_time) for _, p in pts]
        window = max(1, int(math.ceil(2.0 * delta / spacing)))
        for i in range(len(pts)):
            for j in range(i + 1, min(i + window + 2, len(pts))):
                if spaces.distance(body.space, pts[i][1], pts[j][1]) <= 2.0 * delta:
                    if spaces.distance(body.space, flowed[i], flowed[j]) > delta_prime:
                        ok = False
                        break
            if not ok:
                break
        if ok:
            return delta
        delta /= 2.0
    raise CalibrationError(
        f"uniform-continuity calibration failed after {max_halvings} halvings")


def build_boundary_grid(body, eps, R, action, component, s_lo, s_hi, delta,
                        delta_prime, interior_points=(), sample_spacing=None,
                        max_halvings=5, seed=0):
    """Boundary-tight push-off grid: cover the window collar of the eps-level
    set with delta/2 balls centered on it, flow each center (the witness) to
    the R-level set, send interior elements to a designated point of K_out,
    and extend to the adjacency by equivariance."""
    nbh = EpsNeighborhood(body, eps)
    flow_time = R - eps
    delta = calibrate_delta(nbh, component, s_lo, s_hi, flow_time, delta,
                            delta_prime, max_halvings=max_halvings)

    spacing = 0.45 * delta
    count = max(4, int(math.ceil((s_hi - s_lo) / spacing)))
    boundary_samples = nbh.samples(component, s_lo, s_hi, count, endpoint=False)
    balls = [(p, delta / 2.0) for _, p in boundary_samples]
    n_boundary = len(balls)
    balls += [(np.asarray(c, float), delta / 2.0) for c in interior_points]

    window = [p for _, p in boundary_samples] + \
        [np.asarray(c, float) for c in interior_points]
    cover = covers.BallCover(body.space, balls, window)
    projector = covers.NerveProjector(cover, action, seed=seed)
    adj = projector.adj

    if sample_spacing is None:
        sample_spacing = max(delta, (s_hi - s_lo) / 400.0)
    k_count = max(8, int(math.ceil((s_hi - s_lo) / sample_spacing)) + 1)
    K_sigma = nbh.samples(component, s_lo, s_hi, k_count, endpoint=True)
    K_samples = [p for _, p in K_sigma]
    K_out_samples = [normal_flow(body, p, flow_time) for _, p in K_sigma]

    mid = nbh.point(component, 0.5 * (s_lo + s_hi))
    designated = normal_flow(body, mid, flow_time)

    assignment = {}
    boundary_flags = {}
    witnesses = {}
    for i, e in enumerate(adj.elements):
        base = e.base_label
        if base < n_boundary:
            q = e.group_element.apply(cover.balls[base].center)
            img = normal_flow(body, q, flow_time)
            assignment[i] = img
            boundary_flags[i] = True
            witnesses[i] = (q, angle_to_C(body, q, img))
        else:
            assignment[i] = e.group_element.apply(designated)
            boundary_flags[i] = False
    iota = simplicial.VertexMap(body.space, assignment)
    return PushOffGrid(
        body=body, eps=eps, R=R, action=action, cover=cover,
        projector=projector, iota=iota, boundary_flags=boundary_flags,
        witnesses=witnesses, designated=designated, delta=delta,
        delta_prime_target=delta_prime, K_samples=K_samples,
        K_sigma_samples=K_sigma, K_out_samples=K_out_samples)


# ---------------------------------------------------------------------------
# smallness of (delta, delta')


@dataclass
class SmallnessReport:
    alpha: float
    delta: float
    delta_prime: float
    cond1_ok: bool
    cond1_margin: float
    cond2_ok: bool
    cond2_margin: float
    cond3_ok: bool
    cond3_variation: float
    cond3_gate: float

    @property
    def ok(self):
        return self.cond1_ok and self.cond2_ok and self.cond3_ok

    def failing(self):
        out = []
        if not self.cond1_ok:
            out.append("condition (1): translate gap <= 2*delta")
        if not self.cond2_ok:
            out.append("condition (2): N_delta'(K_out) meets the eps-neighborhood")
        if not self.cond3_ok:
            out.append("condition (3): angle variation exceeds alpha/2 - pi/4")
        return out

    def to_json(self):
        return {
            "alpha": self.alpha, "delta": self.delta,
            "delta_prime": self.delta_prime,
            "cond1": {"ok": self.cond1_ok, "margin": self.cond1_margin},
            "cond2": {"ok": self.cond2_ok, "margin": self.cond2_margin},
            "cond3": {"ok": self.cond3_ok, "variation": self.cond3_variation,
                      "gate": self.cond3_gate},
        }


def check_small_relative(body, eps, action, K_samples, K_out_samples,
                         sigma_samples, alpha, delta, delta_prime,
                         sample_resolution):
    """Sampled check that (delta, delta') are small relative to K, K_out, alpha.

    Condition (3) is verified through the sufficient bound M1 + M2 <=
    alpha/2 - pi/4, where M1/M2 are the angle variations over close boundary
    pairs and close K_out pairs respectively.
    """
    space = body.space
    tol = space.tol

    # (1) sampled-disjoint translates must be farther than 2*delta
    cond1_margin = math.inf
    cond1_ok = True
    K_arr = np.asarray(K_samples)
    for g, _ in action.nontrivial():
        gK = np.asarray([g.apply(p) for p in K_samples])
        dmin = min(float(np.min(spaces.distances_to(space, gK, p)))
                   for p in K_samples)
        if dmin > sample_resolution:  # judged disjoint at sample scale
            cond1_margin = min(cond1_margin, dmin - 2.0 * delta)
            if dmin <= 2.0 * delta + tol:
                cond1_ok = False
    del K_arr

    # (2) the delta'-neighborhood of K_out avoids the eps-neighborhood
    gaps = body.dist_batch(np.asarray(K_out_samples)) - eps
    cond2_margin = float(np.min(gaps)) - delta_prime
    cond2_ok = cond2_margin > tol

    # (3) angle-variation gate
    gate = alpha / 2.0 - math.pi / 4.0
    out_aug = list(K_out_samples)
    for p in K_out_samples:
        out_aug.append(normal_flow(body, p, 0.5 * delta_prime))
        d = body.dist(p)
        out_aug.append(normal_flow(body, p, -min(0.5 * delta_prime, d - eps - tol)))
    sig_arr = np.asarray([p for _, p in sigma_samples])
    A = np.stack([angle_to_C_batch(body, sig_arr, qp) for qp in out_aug], axis=1)
    m1 = _pair_variation(A, [p for _, p in sigma_samples], space, delta, axis=0)
    m2 = _pair_variation(A, out_aug, space, delta_prime, axis=1)
    variation = m1 + m2
    cond3_ok = variation <= gate + tol
    return SmallnessReport(alpha, delta, delta_prime, cond1_ok,
                           cond1_margin if cond1_margin < math.inf else math.inf,
                           cond2_ok, cond2_margin, cond3_ok, variation, gate)


def _pair_variation(A, points, space, radius, axis):
    """Max |A difference| over index pairs whose points are within radius."""
    pts = np.asarray(points)
    n = len(pts)
    worst = 0.0
    for i in range(n):
        d = spaces.distances_to(space, pts[i + 1:], pts[i])
        close = np.nonzero(d <= radius)[0]
        for off in close:
            j = i + 1 + int(off)
            diff = np.abs(A[i] - A[j]) if axis == 0 else np.abs(A[:, i] - A[:, j])
            worst = max(worst, float(np.max(diff)))
    return worst


# ---------------------------------------------------------------------------
# push-off extension by geodesic coning


@dataclass
class PushOff:
    grid: PushOffGrid
    lam: float
    order: int
    sub_result: object  # subdivision data
    delta_prime: float

    @property
    def iota_n(self):
        return self.sub_result.iota

    def evaluate(self, support, weights):
        """j at the nerve point (support simplex, barycentric weights).

        The point's subdivision cell is located by the sorted-weight chain
        transform, applied once per subdivision order; the image is the
        geodesic cone (ascending-id fold) over the cell's vertex images.
        Returns (image point, final cell vertex ids).
        """
        w = {int(v): float(x) for v, x in zip(support, weights) if x > 0.0}
        for vertex_of in self.sub_result.stage_vertex_of:
            w = subdivision_coordinates(w, vertex_of)
        space = self.grid.body.space
        items = sorted(w.items())
        acc, W = None, 0.0
        for v, wt in items:
            p = self.iota_n(v)
            if acc is None:
                acc, W = p, wt
                continue
            W += wt
            d = spaces.distance(space, acc, p)
            if d > space.tol:
                acc = spaces.geodesic_point(space, acc, p, d * wt / W)
        return acc, tuple(v for v, _ in items)


def subdivision_coordinates(weights, vertex_of):
    """Barycentric weights on a simplex -> weights on its containing cell of
    the barycentric subdivision (sorted-weight prefix chains)."""
    items = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
    out = {}
    prefix = []
    for m, (v, w) in enumerate(items, start=1):
        prefix.append(v)
        w_next = items[m][1] if m < len(items) else 0.0
        mu = m * (w - w_next)
        if mu > 0.0:
            J = tuple(sorted(prefix))
            out[vertex_of[J]] = out.get(vertex_of[J], 0.0) + mu
    return out


def _equivariance_from_adjacency(adj):
    """Partial vertex maps on the nerve of Adj(U) induced by the group."""
    index_of = {}
    for i, e in enumerate(adj.elements):
        index_of[(e.group_element.key(), e.base_label)] = i
    maps = []
    for h, _ in adj.action.nontrivial():
        vmap = {}
        for i, e in enumerate(adj.elements):
            key = (h.compose(e.group_element).key(), e.base_label)
            if key in index_of:
                vmap[i] = index_of[key]
        if vmap:
            maps.append((h, vmap))
    return subdivision.EquivariantStructure(maps)


def extend_to_pushoff(grid, lam, n, delta_prime, alpha=ALPHA_DEFAULT, rho=None):
    """Extend a boundary-tight push-off grid to a push-off map by an order-n
    shrinking subdivision and geodesic coning.

    Every precondition of the extension step is verified; the failing
    condition is named in the staged error.
    """
    space = grid.body.space
    tol = space.tol

    bdy_target = (1.0 - lam) * delta_prime
    bdy_diam = 0.0
    for e in grid.boundary_edges():
        bdy_diam = max(bdy_diam, spaces.distance(space, grid.iota(e[0]),
                                                 grid.iota(e[1])))
    if bdy_diam > bdy_target + tol:
        raise StagedPreconditionError(
            "boundary-tightness",
            f"boundary map diameter {bdy_diam:.3e} > (1-lambda)*delta' = "
            f"{bdy_target:.3e}")

    # witnesses are constructed on the outward normal, so the true angle is
    # exactly alpha = pi; 1e-5 absorbs the floating-point arccos floor
    min_angle = min((a for _, a in grid.witnesses.values()), default=math.pi)
    if min_angle < alpha - 1e-5:
        raise StagedPreconditionError(
            "grid-angle", f"witness angle {min_angle} < alpha = {alpha}")

    equiv = _equivariance_from_adjacency(grid.adjacency)
    result = subdivision.iterate_subdivision(
        grid.nerve, grid.iota, lam, n, equivariance=equiv, rho=rho)
    complex_, iota = result.complex, result.iota

    full_diam = simplicial.map_diameter(complex_, iota)
    if full_diam > delta_prime + tol:
        raise StagedPreconditionError(
            "full-tightness",
            f"diam(iota_n) = {full_diam:.3e} > delta' = {delta_prime:.3e}")

    push_dist = min(grid.body.dist(iota(v)) - grid.eps for v in complex_.vertices)
    if push_dist <= 0.0:
        raise StagedPreconditionError(
            "image-outside", "subdivided images do not stay outside the "
            "eps-neighborhood")
    if push_dist <= delta_prime + tol:
        raise StagedPreconditionError(
            "push-off-distance",
            f"d_push-off(iota_n) = {push_dist:.3e} <= delta' = {delta_prime:.3e}")

    return PushOff(grid=grid, lam=lam, order=n, sub_result=result,
                   delta_prime=delta_prime)


# ---------------------------------------------------------------------------
# the retraction


class Retractor:
    """r(q): unique crossing of the eps-level set by the geodesic from q to
    the push-off image of q's nerve projection, located by bisection."""

    def __init__(self, pushoff):
        self.pushoff = pushoff
        self.grid = pushoff.grid
        self.body = pushoff.grid.body
        self.eps = pushoff.grid.eps

    def push_target(self, q):
        support, w = self.grid.projector.project(q)
        return self.pushoff.evaluate(support, w)

    def retract(self, q, iters=80):
        body, eps = self.body, self.eps
        tol = body.space.tol
        g0 = body.dist(q) - eps
        if g0 > 100 * tol:
            raise PreconditionError(
                f"q lies {g0:.2e} outside the eps-neighborhood")
        target, _ = self.push_target(q)
        T = spaces.distance(body.space, q, target)
        if body.dist(target) - eps <= 0.0:
            raise PipelineInconsistency(
                "push-off image inside the eps-neighborhood; an upstream "
                "precondition lied")
        lo, hi = 0.0, T
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            pt = spaces.geodesic_point(body.space, q, target, mid)
            if body.dist(pt) - eps <= 0.0:
                lo = mid
            else:
                hi = mid
        t_star = 0.5 * (lo + hi)
        r = spaces.geodesic_point(body.space, q, target, t_star) if t_star > 0 else \
            np.asarray(q, float)
        if abs(body.dist(r) - eps) > 1e-7:
            raise PipelineInconsistency(
                f"bisection residual {abs(body.dist(r) - eps):.2e}; no crossing found")
        return r
