"""Desk-scale retraction scenes and the end-to-end verification pipeline.

A scene fixes the convex body, the level-set radii eps < R, the group, a
window on the eps-level-set component to be retracted onto, the (delta,
delta') pair, and the subdivision parameters.  run_pipeline drives
smallness checks -> boundary grid -> shrinking subdivision -> push-off ->
retraction, recording every gate the construction is supposed to satisfy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import covers, retraction, simplicial, spaces
from .errors import GeometryError, StagedPreconditionError

SQRT3_OVER_2 = math.sqrt(3.0) / 2.0


@dataclass
class Scene:
    name: str
    space: spaces.ModelSpace
    body: retraction.ConvexBody
    eps: float
    R: float
    action: covers.GroupAction
    component: str
    s_lo: float
    s_hi: float
    delta: float
    delta_prime: float
    lam: float
    order: int
    interior_points: list = field(default_factory=list)
    sample_spacing: float | None = None
    alpha: float = math.pi

    def to_json(self):
        return {
            "schema_version": 1,
            "space": self.space.to_json(),
            "body": self.body.to_json(),
            "eps": self.eps,
            "R": self.R,
            "group": self.action.to_json(),
            "window": {
                "component": self.component,
                "s_lo": self.s_lo,
                "s_hi": self.s_hi,
                "interior_points": [list(map(float, p))
                                    for p in self.interior_points],
                "sample_spacing": self.sample_spacing,
            },
            "delta": self.delta,
            "delta_prime": self.delta_prime,
            "lambda": self.lam,
            "order": self.order,
            "name": self.name,
        }

    @staticmethod
    def from_json(doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        space = spaces.ModelSpace.from_json(doc["space"])
        body = retraction.body_from_json(space, doc["body"])
        action = covers.GroupAction.from_json(space, doc["group"])
        w = doc["window"]
        return Scene(
            name=doc.get("name", "scene"), space=space, body=body,
            eps=doc["eps"], R=doc["R"], action=action,
            component=w["component"], s_lo=w["s_lo"], s_hi=w["s_hi"],
            delta=doc["delta"], delta_prime=doc["delta_prime"],
            lam=doc["lambda"], order=doc["order"],
            interior_points=[np.asarray(p, float)
                             for p in w.get("interior_points", [])],
            sample_spacing=w.get("sample_spacing"))


def hyperbolic_axis_scene(eps=1.0, R=3.0, period=4.0, delta=4e-3,
                          delta_prime=0.5, lam=SQRT3_OVER_2, order=2):
    """The flagship scene: C = geodesic axis in H^2, H = <boost of the period>,
    window = one period of the plus equidistant curve."""
    space = spaces.ModelSpace.hyperboloid(2)
    body = retraction.LineBody(space, np.array([1.0, 0.0, 0.0]),
                               np.array([math.cosh(1.0), math.sinh(1.0), 0.0]))
    action = covers.GroupAction(
        space, [spaces.Isometry.hyperbolic_boost(period)], word_length=2)
    arc = period * math.cosh(eps)  # arc length of one period of the eps-level curve
    # window centered on the origin keeps coordinates small (conditioning)
    return Scene("hyperbolic_axis", space, body, eps, R, action,
                 "plus", -arc / 2.0, arc / 2.0, delta, delta_prime, lam, order)


def euclidean_point_scene(eps=1.0, R=2.0, delta=0.012, delta_prime=0.5,
                          lam=SQRT3_OVER_2, order=1):
    """C = a point in R^2, trivial group; the analytic-oracle scene."""
    space = spaces.ModelSpace.euclidean(2)
    body = retraction.PointBody(space, np.zeros(2))
    action = covers.GroupAction(space, [], word_length=0)
    return Scene("euclidean_point", space, body, eps, R, action,
                 "circle", 0.0, 2.0 * math.pi * eps, delta, delta_prime,
                 lam, order)


def euclidean_segment_scene(eps=1.0, R=2.0, delta=0.02, delta_prime=0.5,
                            lam=SQRT3_OVER_2, order=1):
    space = spaces.ModelSpace.euclidean(2)
    body = retraction.SegmentBody(space, np.zeros(2), np.array([1.0, 0.0]))
    action = covers.GroupAction(space, [], word_length=0)
    perimeter = 2.0 * body.length + 2.0 * math.pi * eps
    return Scene("euclidean_segment", space, body, eps, R, action,
                 "outer", 0.0, perimeter, delta, delta_prime, lam, order)


def hyperbolic_patch_scene(eps=1.0, R=3.0, width=0.05, delta=4e-3,
                           delta_prime=0.4, lam=SQRT3_OVER_2, order=1):
    """Small slab scene with interior cover elements: exercises the
    designated-interior-point branch with full tightness still attainable."""
    space = spaces.ModelSpace.hyperboloid(2)
    body = retraction.LineBody(space, np.array([1.0, 0.0, 0.0]),
                               np.array([math.cosh(1.0), math.sinh(1.0), 0.0]))
    action = covers.GroupAction(space, [], word_length=0)
    nbh = retraction.EpsNeighborhood(body, eps)
    interior = []
    for s in np.linspace(0.0, width, 4):
        q = nbh.point("plus", float(s))
        interior.append(retraction.normal_flow(body, q, -delta / 3.0))
    return Scene("hyperbolic_patch", space, body, eps, R, action,
                 "plus", 0.0, width, delta, delta_prime, lam, order,
                 interior_points=interior)


def broken_delta_prime_scene():
    """delta' exceeds the gap from K_out to the eps-neighborhood:
    smallness condition (2) must fail."""
    scene = euclidean_point_scene(eps=1.0, R=1.3, delta_prime=0.5)
    scene.name = "broken_delta_prime"
    return scene


# ---------------------------------------------------------------------------
# the report


@dataclass
class RetractionReport:
    scene: dict
    lam: float
    order: int
    seed: int
    gates: dict = field(default_factory=dict)
    smallness: dict | None = None
    grid: dict | None = None
    extension: dict | None = None
    diam_iota: float | None = None
    diam_K_Kout: float | None = None
    identity_rows: list = field(default_factory=list)  # (s, residual)
    angle_rows: list = field(default_factory=list)  # (s, angle)
    escape_rows: list = field(default_factory=list)  # (s, bool)
    idempotence_rows: list = field(default_factory=list)  # (s, d(r(r q), r q))
    coning_rows: list = field(default_factory=list)  # (s, dist_to_nearest, cell_diam)
    radial_rows: list = field(default_factory=list)  # (s, residual) point scenes
    interior_rows: list = field(default_factory=list)  # (s, level residual)
    moduli: dict = field(default_factory=dict)  # scale -> sup d(r q, r q')
    projection_moduli: dict = field(default_factory=dict)  # scale -> sup weight diff
    failure: dict | None = None

    @property
    def ok(self):
        return self.failure is None and all(self.gates.values())

    def to_json(self):
        return {
            "schema_version": 1,
            "scene": self.scene,
            "lambda": self.lam,
            "order": self.order,
            "seed": self.seed,
            "ok": self.ok,
            "gates": self.gates,
            "smallness": self.smallness,
            "grid": self.grid,
            "extension": self.extension,
            "diam_iota": self.diam_iota,
            "diam_K_Kout": self.diam_K_Kout,
            "max_identity_residual": max((r for _, r in self.identity_rows),
                                         default=None),
            "min_boundary_angle": min((a for _, a in self.angle_rows),
                                      default=None),
            "escape_all": all(v for _, v in self.escape_rows)
            if self.escape_rows else None,
            "max_idempotence_residual": max((r for _, r in self.idempotence_rows),
                                            default=None),
            "max_radial_residual": max((r for _, r in self.radial_rows),
                                       default=None),
            "moduli": self.moduli,
            "projection_moduli": self.projection_moduli,
            "failure": self.failure,
        }

    def samples_csv(self):
        lines = ["# barylab retraction samples v1",
                 "sample_id,s,identity_residual,angle,escape"]
        esc = dict((s, int(v)) for s, v in self.escape_rows)
        ang = dict(self.angle_rows)
        for i, (s, res) in enumerate(self.identity_rows):
            lines.append(f"{i},{s:.17g},{res:.17g},{ang.get(s, float('nan')):.17g},"
                         f"{esc.get(s, -1)}")
        return "\n".join(lines) + "\n"


def _fail(report, stage, message):
    report.failure = {"stage": stage, "message": message}
    report.gates["pipeline_completed"] = False
    return report


def run_pipeline(scene, lam=None, order=None, density=200, seed=0):
    """Run the full construction and verify every gate; returns the report.

    Stages: smallness of (delta, delta') -> boundary-tight push-off grid
    (with empirical calibration) -> equivariant order-n shrinking subdivision
    -> push-off by geodesic coning -> retraction checks on level-set samples.
    """
    lam = scene.lam if lam is None else lam
    order = scene.order if order is None else order
    body, eps, R = scene.body, scene.eps, scene.R
    space = scene.space
    tol = space.tol
    report = RetractionReport(scene=scene.to_json(), lam=lam, order=order,
                              seed=seed)

    nbh = retraction.EpsNeighborhood(body, eps)
    span = scene.s_hi - scene.s_lo
    spacing = scene.sample_spacing or max(scene.delta, span / 400.0)
    k_count = max(8, int(math.ceil(span / spacing)) + 1)
    K_sigma = nbh.samples(scene.component, scene.s_lo, scene.s_hi, k_count,
                          endpoint=True)
    K_samples = [p for _, p in K_sigma] + [np.asarray(c, float)
                                           for c in scene.interior_points]
    K_out = [retraction.normal_flow(body, p, R - eps) for _, p in K_sigma]

    sig_count = max(16, int(math.ceil(span / (scene.delta / 2.0))) + 1)
    sig_count = min(sig_count, 6000)
    sigma_dense = nbh.samples(scene.component, scene.s_lo, scene.s_hi,
                              sig_count, endpoint=True)

    smallness = retraction.check_small_relative(
        body, eps, scene.action, K_samples, K_out, sigma_dense, scene.alpha,
        scene.delta, scene.delta_prime, sample_resolution=2.0 * spacing)
    report.smallness = smallness.to_json()
    report.gates["smallness"] = smallness.ok
    if not smallness.ok:
        return _fail(report, "smallness", "; ".join(smallness.failing()))

    try:
        grid = retraction.build_boundary_grid(
            body, eps, R, scene.action, scene.component, scene.s_lo, scene.s_hi,
            scene.delta, (1.0 - lam) * scene.delta_prime,
            interior_points=scene.interior_points,
            sample_spacing=spacing, seed=seed)
    except GeometryError as exc:
        return _fail(report, "build-grid", str(exc))

    gv = grid.verify(alpha=scene.alpha)
    report.grid = {
        "delta_achieved": grid.delta,
        "min_witness_angle": gv.min_witness_angle,
        "push_off_distance": gv.push_off_distance,
        "boundary_map_diameter": gv.boundary_map_diameter,
        "elements": len(grid.adjacency),
    }
    report.diam_iota = gv.diam_iota
    report.gates["grid_angle"] = gv.min_witness_angle >= scene.alpha - 1e-5
    report.gates["push_off_positive"] = gv.push_off_distance > 0.0
    report.gates["boundary_tightness"] = (
        gv.boundary_map_diameter <= (1.0 - lam) * scene.delta_prime + tol)

    dkk = covers.diam_K_Kout(scene.action, K_samples, K_out,
                             slack=2.0 * grid.delta)
    report.diam_K_Kout = dkk
    report.gates["diam_iota_le_diam_K_Kout"] = gv.diam_iota <= dkk + tol

    try:
        pushoff = retraction.extend_to_pushoff(grid, lam, order,
                                               scene.delta_prime,
                                               alpha=scene.alpha)
    except StagedPreconditionError as exc:
        return _fail(report, exc.stage, str(exc))
    except GeometryError as exc:
        return _fail(report, "extension", str(exc))

    sub = pushoff.sub_result
    full_diam = simplicial.map_diameter(sub.complex, sub.iota)
    push_dist = min(body.dist(sub.iota(v)) - eps for v in sub.complex.vertices)
    report.extension = {
        "full_map_diameter": full_diam,
        "push_off_distance_n": push_dist,
        "subdivision_vertices": len(sub.complex.vertices),
        "max_stage_ratio": max((st.max_ratio() for st in sub.record.stages),
                               default=0.0),
    }
    report.gates["full_tightness"] = full_diam <= scene.delta_prime + tol
    report.gates["push_off_gt_delta_prime"] = push_dist > scene.delta_prime

    retractor = retraction.Retractor(pushoff)
    margin = min(0.02 * span, grid.delta)  # keep samples off the exact seam
    ss = np.linspace(scene.s_lo + margin, scene.s_hi - margin, density)
    angle_gate = scene.alpha / 2.0 + math.pi / 4.0

    diam_iota_grid = gv.diam_iota
    cone_bound = (lam ** order) * diam_iota_grid
    coning_ok = True
    for s in ss:
        s = float(s)
        q = nbh.point(scene.component, s)
        target, cell = retractor.push_target(q)
        r = retractor.retract(q)
        report.identity_rows.append((s, spaces.distance(space, r, q)))
        report.angle_rows.append((s, retraction.angle_to_C(body, q, target)))
        report.escape_rows.append(
            (s, retraction.check_large_angle_escape(body, eps, q, target)))
        imgs = [sub.iota(v) for v in cell]
        cell_diam = spaces.pairwise_diameter(space, imgs)
        nearest = min(spaces.distance(space, target, z) for z in imgs)
        report.coning_rows.append((s, nearest, cell_diam))
        if cell_diam > cone_bound + 10 * tol or nearest > cell_diam + 10 * tol:
            coning_ok = False
        rr = retractor.retract(r)
        report.idempotence_rows.append((s, spaces.distance(space, r, rr)))
        if body.kind == "point":
            radial = retraction.normal_flow(body, q, eps - body.dist(q)) \
                if abs(body.dist(q) - eps) > tol else q
            report.radial_rows.append((s, spaces.distance(space, r, radial)))
    report.gates["coning_containment"] = coning_ok

    for s in ss[::4]:
        s = float(s)
        q = nbh.point(scene.component, s)
        q_in = retraction.normal_flow(body, q, -grid.delta / 4.0)
        r_in = retractor.retract(q_in)
        report.interior_rows.append((s, abs(body.dist(r_in) - eps)))
        rr_in = retractor.retract(r_in)
        report.idempotence_rows.append((s, spaces.distance(space, r_in, rr_in)))

    # continuity moduli along the boundary at fixed scales
    mod_scales = (1e-2, 1e-3, 1e-4)
    base_ss = np.linspace(scene.s_lo + margin,
                          scene.s_hi - margin - max(mod_scales), 33)
    for h in mod_scales:
        sup_r = 0.0
        sup_w = 0.0
        for s in base_ss:
            q1 = nbh.point(scene.component, float(s))
            q2 = nbh.point(scene.component, float(s) + h)
            r1 = retractor.retract(q1)
            r2 = retractor.retract(q2)
            sup_r = max(sup_r, spaces.distance(space, r1, r2))
            w1 = grid.projector.tents(q1)
            w2 = grid.projector.tents(q2)
            w1 = w1 / np.sum(w1)
            w2 = w2 / np.sum(w2)
            sup_w = max(sup_w, float(np.max(np.abs(w1 - w2))))
        report.moduli[f"{h:g}"] = sup_r
        report.projection_moduli[f"{h:g}"] = sup_w

    report.gates["identity"] = max(r for _, r in report.identity_rows) <= 1e-8
    report.gates["boundary_angle"] = (
        min(a for _, a in report.angle_rows) >= angle_gate - 1e-6)
    report.gates["escape"] = all(v for _, v in report.escape_rows)
    report.gates["idempotence"] = (
        max(r for _, r in report.idempotence_rows) <= 10 * tol)
    report.gates["interior_level"] = (
        max(r for _, r in report.interior_rows) <= 1e-7)
    vals = [report.moduli[f"{h:g}"] for h in mod_scales]
    report.gates["moduli_nonincreasing"] = all(
        vals[i] >= vals[i + 1] - tol for i in range(len(vals) - 1))
    if body.kind == "point":
        report.gates["radial_oracle"] = (
            max(r for _, r in report.radial_rows) <= 1e-6)
    report.gates["pipeline_completed"] = True
    return report


SCENE_BUILDERS = {
    "hyperbolic_axis": hyperbolic_axis_scene,
    "euclidean_point": euclidean_point_scene,
    "euclidean_segment": euclidean_segment_scene,
    "hyperbolic_patch": hyperbolic_patch_scene,
    "broken_delta_prime": broken_delta_prime_scene,
}
