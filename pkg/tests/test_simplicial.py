"""Complex validation, barycentric subdivision, rooms, vertex-map diameters."""

import itertools
import math

import numpy as np
import pytest

from barylab import simplicial, spaces
from barylab.errors import ProvenanceCorruption, UnknownSimplex

E2 = spaces.ModelSpace.euclidean(2)


def brute_force_subdivision(simplices):
    """Independent oracle: enumerate strict chains in the face lattice."""
    faces = set()
    for s in simplices:
        for k in range(1, len(s) + 1):
            faces.update(itertools.combinations(sorted(s), k))
    chains = set()
    faces = sorted(faces, key=lambda f: (len(f), f))
    def extend(chain):
        chains.add(tuple(chain))
        for f in faces:
            if len(f) > len(chain[-1]) and set(chain[-1]) < set(f):
                extend(chain + [f])
    for f in faces:
        extend([f])
    return set(faces), chains


def test_validate_examples():
    tri = simplicial.SimplicialComplex.from_maximal([(0, 1, 2)])
    assert simplicial.validate(tri) == []
    broken = simplicial.SimplicialComplex(
        [0, 1, 2], [(0,), (1,), (2,), (0, 1), (1, 2), (0, 1, 2)])
    msgs = simplicial.validate(broken)
    assert any("(0, 2)" in m for m in msgs)
    empty = simplicial.SimplicialComplex([], [])
    assert simplicial.validate(empty) == []


def test_subdivision_edge():
    edge = simplicial.SimplicialComplex.from_maximal([(0, 1)])
    sub, prov = simplicial.barycentric_subdivision(edge)
    assert len(sub.vertices) == 3
    assert len(sub.edges) == 2
    mid = [v for v, J in prov.sets.items() if J == (0, 1)]
    assert len(mid) == 1
    assert (0, mid[0]) in sub.simplices and (1, mid[0]) in sub.simplices


def test_subdivision_triangle_counts_against_oracle():
    tri = simplicial.SimplicialComplex.from_maximal([(0, 1, 2)])
    sub, prov = simplicial.barycentric_subdivision(tri)
    faces, chains = brute_force_subdivision([(0, 1, 2)])
    assert len(sub.vertices) == len(faces) == 7
    assert len(sub.edges) == sum(1 for c in chains if len(c) == 2) == 12
    assert len(sub.simplices_of_dim(2)) == sum(1 for c in chains if len(c) == 3) == 6
    # exact simplex sets match the oracle through provenance
    vertex_of = {J: v for v, J in prov.sets.items()}
    oracle = {tuple(sorted(vertex_of[J] for J in c)) for c in chains}
    assert oracle == sub.simplices


def test_subdivision_zero_dimensional():
    pts = simplicial.SimplicialComplex.from_maximal([(0,), (5,)])
    sub, prov = simplicial.barycentric_subdivision(pts)
    assert sub.vertices == pts.vertices
    assert sub.simplices == pts.simplices


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_n_simplex_subdivision_counts(n):
    top = tuple(range(n + 1))
    cplx = simplicial.SimplicialComplex.from_maximal([top])
    sub, _ = simplicial.barycentric_subdivision(cplx)
    assert len(sub.vertices) == 2 ** (n + 1) - 1
    assert len(sub.simplices_of_dim(n)) == math.factorial(n + 1)
    assert simplicial.validate(sub) == []


def test_subdivision_edge_condition():
    """U_J and U_J' are adjacent iff one set contains the other."""
    tri = simplicial.SimplicialComplex.from_maximal([(0, 1, 2)])
    sub, prov = simplicial.barycentric_subdivision(tri)
    for u, v in itertools.combinations(sorted(sub.vertices), 2):
        Ju, Jv = set(prov.of(u)), set(prov.of(v))
        expected = Ju < Jv or Jv < Ju
        assert ((u, v) in sub.simplices) == expected


def test_room_examples():
    tri = simplicial.SimplicialComplex.from_maximal([(0, 1, 2)])
    r = simplicial.room(tri, (0, 1, 2))
    assert r.simplices == tri.simplices

    two = simplicial.SimplicialComplex.from_maximal([(0, 1, 2), (1, 2, 3)])
    r = simplicial.room(two, (1, 2))
    assert r.vertices == {0, 1, 2, 3}
    assert (0, 1, 2) in r.simplices and (1, 2, 3) in r.simplices

    path = simplicial.SimplicialComplex.from_maximal([(0, 1), (1, 2)])
    r = simplicial.room(path, (1,))
    assert r.vertices == {0, 1, 2}
    assert (0, 1) in r.simplices and (1, 2) in r.simplices

    with pytest.raises(UnknownSimplex):
        simplicial.room(path, (0, 2))


def test_map_diameter_examples():
    edge = simplicial.SimplicialComplex.from_maximal([(0, 1)])
    iota = simplicial.VertexMap(E2, {0: np.zeros(2), 1: np.array([1.0, 0.0])})
    assert abs(simplicial.map_diameter(edge, iota) - 1.0) < 1e-12

    same = simplicial.VertexMap(E2, {0: np.ones(2), 1: np.ones(2)})
    assert simplicial.map_diameter(edge, same) == 0.0

    tri = simplicial.SimplicialComplex.from_maximal([(0, 1, 2)])
    iota = simplicial.VertexMap(E2, {0: np.zeros(2), 1: np.array([1.0, 0.0]),
                                     2: np.array([0.0, 2.0])})
    assert abs(simplicial.map_diameter(tri, iota) - math.sqrt(5)) < 1e-12


def test_map_diameter_edges_equal_all_simplices():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(4, 8))
        tops = [tuple(sorted(rng.choice(n, size=3, replace=False)))
                for _ in range(4)]
        cplx = simplicial.SimplicialComplex.from_maximal(tops)
        iota = simplicial.VertexMap(
            E2, {v: rng.uniform(-1, 1, size=2) for v in cplx.vertices})
        d_edges = simplicial.map_diameter(cplx, iota)
        d_all = simplicial.map_diameter_all_simplices(cplx, iota)
        assert abs(d_edges - d_all) < 1e-12


def test_least_containing_simplex():
    edge = simplicial.SimplicialComplex.from_maximal([(0, 1)])
    sub, prov = simplicial.barycentric_subdivision(edge)
    mid = next(v for v, J in prov.sets.items() if J == (0, 1))
    assert simplicial.least_containing_simplex(edge, prov, (0, mid)) == (0, 1)

    tri = simplicial.SimplicialComplex.from_maximal([(0, 1, 2)])
    sub, prov = simplicial.barycentric_subdivision(tri)
    bary = next(v for v, J in prov.sets.items() if J == (0, 1, 2))
    e01 = next(v for v, J in prov.sets.items() if J == (0, 1))
    assert simplicial.least_containing_simplex(tri, prov, (bary,)) == (0, 1, 2)
    assert simplicial.least_containing_simplex(
        tri, prov, tuple(sorted((0, e01, bary)))) == (0, 1, 2)

    # corrupted provenance: a union that spans nothing
    two = simplicial.SimplicialComplex.from_maximal([(0, 1), (2, 3)])
    sub2, prov2 = simplicial.barycentric_subdivision(two)
    m01 = next(v for v, J in prov2.sets.items() if J == (0, 1))
    m23 = next(v for v, J in prov2.sets.items() if J == (2, 3))
    with pytest.raises(ProvenanceCorruption):
        simplicial.least_containing_simplex(two, prov2, (m01, m23))


def test_provenance_compose():
    edge = simplicial.SimplicialComplex.from_maximal([(0, 1)])
    s1, p1 = simplicial.barycentric_subdivision(edge)
    s2, p2 = simplicial.barycentric_subdivision(s1)
    total = p2.compose(p1)
    # every second-subdivision vertex resolves to a face of the original edge
    for v in s2.vertices:
        assert set(total.of(v)) <= {0, 1}
    # the deepest vertex barycenters the whole edge
    mids = [v for v in s2.vertices if total.of(v) == (0, 1)]
    assert len(mids) == 3  # first midpoint plus two second-level midpoints


def test_room_image_diameter_at_most_twice_map_diameter():
    """Any two simplices of a room share the central simplex's vertices, so
    the room's image diameter is at most 2 diam(iota)."""
    rng = np.random.default_rng(31)
    for _ in range(15):
        tops = [tuple(sorted(rng.choice(8, size=3, replace=False)))
                for _ in range(5)]
        cplx = simplicial.SimplicialComplex.from_maximal(tops)
        iota = simplicial.VertexMap(
            E2, {v: rng.uniform(-1, 1, size=2) for v in cplx.vertices})
        d = simplicial.map_diameter(cplx, iota)
        for s in cplx.simplices:
            rm = simplicial.room(cplx, s)
            pts = [iota(v) for v in rm.vertices]
            assert spaces.pairwise_diameter(E2, pts) <= 2 * d + 1e-12


def test_complex_json_roundtrip():
    cplx = simplicial.SimplicialComplex.from_maximal([(0, 1, 2), (2, 3)])
    back = simplicial.SimplicialComplex.from_json(cplx.to_json())
    assert back.simplices == cplx.simplices and back.vertices == cplx.vertices
    iota = simplicial.VertexMap(E2, {v: np.array([float(v), 0.0])
                                     for v in cplx.vertices})
    back_map = simplicial.VertexMap.from_json(E2, iota.to_json())
    for v in cplx.vertices:
        assert np.allclose(back_map(v), iota(v))
