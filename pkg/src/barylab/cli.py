"""Batch front-end: solve barycenter problems, sweep phase diagrams, run
subdivisions and retraction pipelines, and emit certificates/reports/CSV.

Exit codes: 0 success / found; 1 malformed input; 2 barycenter not found;
3 indeterminate; 4 verification-gate failure.  Outputs are written atomically
(temp file + rename) and are byte-identical for identical configs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

from . import barycenters, scenes, simplicial, spaces, subdivision
from .errors import GeometryError


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".barylab-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _dump_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _worker_count(n_items):
    try:
        cap = int(os.environ.get("BARYLAB_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, n_items)) if n_items else 1


def _load_input(path):
    with open(path) as f:
        return json.load(f)


def cmd_barycenter(args):
    try:
        doc = _load_input(args.input)
        prob, raw = barycenters.load_problem(doc)
        if not prob.P:
            raise ValueError("P must be nonempty")
        lam = args.lam if args.lam is not None else raw.get("lambda")
        if lam is None:
            raise KeyError("lambda")
        if args.tol is not None:
            prob.space = spaces.ModelSpace(
                prob.space.kind, prob.space.dim, prob.space.radius,
                prob.space.matrix, args.tol)
        rho = args.delta
    except (KeyError, ValueError, OSError, json.JSONDecodeError,
            GeometryError) as exc:
        print(f"barylab barycenter: bad input: {exc}", file=sys.stderr)
        return 1
    cert = barycenters.solve_barycenter(prob, float(lam), rho=rho)
    _atomic_write(args.output, _dump_json(cert.to_json()))
    if cert.status == "found":
        return 0
    if cert.status == "not_found_below":
        return 2
    return 3


def cmd_phase(args):
    try:
        doc = _load_input(args.input)
        space = spaces.ModelSpace.from_json(doc["space"])
        lambdas = doc["lambdas"]
        deltas = doc["deltas"]
        trials = args.trials if args.trials is not None else doc.get("trials", 100)
    except (KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"barylab phase: bad input: {exc}", file=sys.stderr)
        return 1
    rows = [(lam, delta) for lam in lambdas for delta in deltas]

    def run(row):
        lam, delta = row
        rep = barycenters.has_barycenters_sample(space, lam, delta, trials,
                                                 seed=args.seed)
        worst = "-"
        if rep.worst is not None and rep.pass_rate < 1.0:
            worst = json.dumps(rep.worst, sort_keys=True).replace(",", ";")
        return (lam, delta, trials, rep.pass_rate, worst)

    with ThreadPoolExecutor(max_workers=_worker_count(len(rows))) as ex:
        results = list(ex.map(run, rows))
    lines = ["# barylab phase sweep v1", "lambda,delta,trials,pass_rate,worst_witness"]
    for lam, delta, t, rate, worst in results:
        lines.append(f"{lam:.17g},{delta:.17g},{t},{rate:.17g},{worst}")
    _atomic_write(args.output, "\n".join(lines) + "\n")
    return 0


def cmd_subdivide(args):
    try:
        doc = _load_input(args.input)
        space = spaces.ModelSpace.from_json(doc["space"])
        complex_ = simplicial.SimplicialComplex.from_json(doc["complex"])
        iota = simplicial.VertexMap.from_json(space, doc["vertex_map"])
        lam = args.lam if args.lam is not None else doc["lambda"]
        order = args.order if args.order is not None else doc.get("order", 1)
    except (KeyError, ValueError, OSError, json.JSONDecodeError,
            GeometryError) as exc:
        print(f"barylab subdivide: bad input: {exc}", file=sys.stderr)
        return 1
    try:
        result = subdivision.iterate_subdivision(complex_, iota, float(lam),
                                                 int(order))
    except GeometryError as exc:
        print(f"barylab subdivide: {exc}", file=sys.stderr)
        return 4
    _atomic_write(args.output, result.record.to_csv())
    verdict = subdivision.verify_shrinking(result.record)
    if not verdict.ok:
        print(f"barylab subdivide: {len(verdict.violations)} bound violations",
              file=sys.stderr)
        return 4
    return 0


def cmd_retract(args):
    try:
        doc = _load_input(args.input)
        if "scene" in doc:
            overrides = doc.get("overrides", {})
            scene = scenes.SCENE_BUILDERS[doc["scene"]](**overrides)
        else:
            scene = scenes.Scene.from_json(doc)
    except (KeyError, TypeError, ValueError, OSError, json.JSONDecodeError,
            GeometryError) as exc:
        print(f"barylab retract: bad input: {exc}", file=sys.stderr)
        return 1
    report = scenes.run_pipeline(scene, lam=args.lam, order=args.order,
                                 density=args.density, seed=args.seed)
    _atomic_write(args.output, _dump_json(report.to_json()))
    _atomic_write(args.output + ".csv", report.samples_csv())
    if not report.ok:
        failing = [k for k, v in report.gates.items() if not v]
        msg = report.failure["message"] if report.failure else ", ".join(failing)
        print(f"barylab retract: gate failure: {msg}", file=sys.stderr)
        return 4
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="barylab")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in [("barycenter", cmd_barycenter), ("phase", cmd_phase),
                     ("subdivide", cmd_subdivide), ("retract", cmd_retract)]:
        sp = sub.add_parser(name)
        sp.add_argument("--input", required=True)
        sp.add_argument("--output", required=True)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--density", type=int, default=200)
        sp.add_argument("--lambda", dest="lam", type=float, default=None)
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--order", type=int, default=None)
        sp.set_defaults(fn=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
