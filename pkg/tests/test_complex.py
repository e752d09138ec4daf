from math import comb

import numpy as np
import pytest

from topo_trojan.complex import build_filtration, simplex_counts
from topo_trojan.errors import DegenerateDataError, TopoTrojanError
from topo_trojan.trace import DissimilarityMatrix


def random_dissimilarity(m, seed, low=0.0, high=2.0):
    rng = np.random.default_rng(seed)
    A = rng.uniform(low, high, size=(m, m))
    w = (A + A.T) / 2.0
    np.fill_diagonal(w, 0.0)
    return DissimilarityMatrix(w=w)


def square():
    w = np.full((4, 4), 0.8)
    for i, j in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        w[i, j] = w[j, i] = 0.3
    np.fill_diagonal(w, 0.0)
    return DissimilarityMatrix(w=w)


def test_full_complex_counts():
    for m in (2, 3, 5, 9):
        F = build_filtration(random_dissimilarity(m, seed=m), cutoff=2.0)
        assert simplex_counts(F) == (m, comb(m, 2), comb(m, 3))
        assert len(F) == m + comb(m, 2) + comb(m, 3)


def test_cutoff_removes_long_edges_and_their_cofaces():
    W = random_dissimilarity(8, seed=1)
    cutoff = 0.9
    F = build_filtration(W, cutoff)
    edges, values = F.edges()
    expected = {(i, j) for i in range(8) for j in range(i + 1, 8) if W.w[i, j] <= cutoff}
    assert {tuple(e) for e in edges.tolist()} == expected
    assert np.all(values <= cutoff)
    for a, b, c in F.triangles()[0].tolist():
        assert {(a, b), (a, c), (b, c)} <= expected
    assert F.cutoff == cutoff


def test_smaller_cutoff_gives_a_subcomplex():
    W = random_dissimilarity(9, seed=5)
    big = build_filtration(W, 1.6)
    big_edges = {tuple(e) for e in big.edges()[0].tolist()}
    big_triangles = {tuple(t) for t in big.triangles()[0].tolist()}
    for cutoff in (1.2, 0.8, 0.4):
        small = build_filtration(W, cutoff)
        small_edges = {tuple(e) for e in small.edges()[0].tolist()}
        small_triangles = {tuple(t) for t in small.triangles()[0].tolist()}
        assert small_edges <= big_edges
        assert small_triangles <= big_triangles
        big_edges, big_triangles = small_edges, small_triangles


def test_filtration_order_is_valid():
    F = build_filtration(random_dissimilarity(7, seed=2), cutoff=1.5)
    assert np.all(np.diff(F.values) >= 0)
    seen = {}
    for pos, simplex in enumerate(F):
        verts = simplex.vertices
        assert list(verts) == sorted(verts)
        if simplex.dim > 0:
            for k in range(len(verts)):
                face = verts[:k] + verts[k + 1 :]
                assert seen[face] < pos
        seen[verts] = pos


def test_filter_values_are_max_edge_weight():
    W = random_dissimilarity(6, seed=3)
    F = build_filtration(W, cutoff=2.0)
    tris, values = F.triangles()
    for (a, b, c), v in zip(tris.tolist(), values.tolist()):
        assert v == max(W.w[a, b], W.w[a, c], W.w[b, c])
    assert np.all(F.values[F.positions(0)] == 0.0)


def test_ties_put_faces_first():
    F = build_filtration(square(), cutoff=2.0)
    dims_at_08 = F.dims[F.values == 0.8].tolist()
    assert dims_at_08 == sorted(dims_at_08)
    edges, _ = F.edges()
    assert edges[:4].tolist() == [[0, 1], [0, 3], [1, 2], [2, 3]]


def test_triangle_edges_match_lookup():
    F = build_filtration(random_dissimilarity(6, seed=4), cutoff=1.2)
    edges, _ = F.edges()
    lookup = F.edge_lookup()
    for ordinal, (a, b) in enumerate(edges.tolist()):
        assert lookup[a, b] == lookup[b, a] == ordinal
    tris, _ = F.triangles()
    for (a, b, c), faces in zip(tris.tolist(), F.triangle_edges().tolist()):
        assert [edges[k].tolist() for k in faces] == [[a, b], [a, c], [b, c]]


def test_cutoff_below_every_edge_leaves_vertices_only():
    W = random_dissimilarity(5, seed=5, low=0.5, high=1.0)
    F = build_filtration(W, cutoff=0.1)
    assert simplex_counts(F) == (5, 0, 0)


def test_layer_assignment_is_carried():
    w = square().w
    F = build_filtration(DissimilarityMatrix(w=w, layer_of=[0, 0, 1, 1]), cutoff=2.0)
    assert F.layer_of.tolist() == [0, 0, 1, 1]


def test_invalid_inputs():
    with pytest.raises(TopoTrojanError):
        build_filtration(square(), cutoff=0.0)
    with pytest.raises(DegenerateDataError):
        build_filtration(DissimilarityMatrix(w=[[0.0]]), cutoff=1.0)


if __name__ == "__main__":
    test_full_complex_counts()
    test_filtration_order_is_valid()
    print("complex tests passed")
