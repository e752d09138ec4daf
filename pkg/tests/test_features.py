import numpy as np
import pytest
from pydantic import ValidationError

from topo_trojan.complex import build_filtration
from topo_trojan.errors import DegenerateDataError
from topo_trojan.features import (
    CORR_NAMES,
    FEATURE_NAMES,
    FeatureVector,
    corr_baseline_features,
    top_singular_values,
    topo_features,
)
from topo_trojan.persistence import Dot, PersistenceDiagram, compute_diagrams
from topo_trojan.trace import ActivationTrace, CorrelationMatrix, DissimilarityMatrix, correlation_matrix


def square_diagrams():
    w = np.full((4, 4), 0.8)
    for i, j in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        w[i, j] = w[j, i] = 0.3
    np.fill_diagonal(w, 0.0)
    return compute_diagrams(build_filtration(DissimilarityMatrix(w=w), 2.0))


def test_feature_names():
    assert FEATURE_NAMES == ["f01", "f02", "f03", "f04", "f05", "f06", "f11", "f12", "f13", "f14", "f15", "f16"]
    assert len(CORR_NAMES) == 8


def test_square_features():
    dg0, dg1 = square_diagrams()
    fv = topo_features(dg0, dg1, model_label=1)
    expected = [0.3, 0.3, 0.0, 0.3, 0.15, 0.0, 0.5, 0.5, 0.3, 0.8, 0.55, 0.0]
    assert fv.values == pytest.approx(expected)
    assert fv.model_label == 1
    assert len(fv) == 12


def test_empty_dimension_gives_zeros():
    dg0 = PersistenceDiagram(dots=[Dot(0, 0.0, float("inf"))])
    fv = topo_features(dg0, PersistenceDiagram())
    assert np.array_equal(fv.values, np.zeros(12))


def test_essential_and_zero_persistence_dots_are_ignored():
    dg1 = PersistenceDiagram(
        dots=[Dot(1, 0.2, 0.6), Dot(1, 0.4, 0.4), Dot(1, 0.1, float("inf")), Dot(1, 0.1, 0.3)],
        with_zero_persistence=True,
    )
    fv = topo_features(PersistenceDiagram(), dg1)
    assert fv.values[6:] == pytest.approx([0.4, 0.3, 0.15, 0.45, 0.3, 0.1])


def test_features_do_not_depend_on_dot_order():
    dg0, dg1 = square_diagrams()
    rng = np.random.default_rng(5)
    births = rng.uniform(0.0, 1.0, size=9)
    dg1 = dg1 + PersistenceDiagram.from_points(1, [(b, b + d) for b, d in zip(births, rng.uniform(0.0, 1.0, size=9))])
    base = topo_features(dg0, dg1)
    for _ in range(5):
        shuffled0 = PersistenceDiagram(dots=[dg0.dots[k] for k in rng.permutation(len(dg0))])
        shuffled1 = PersistenceDiagram(dots=[dg1.dots[k] for k in rng.permutation(len(dg1))])
        assert topo_features(shuffled0, shuffled1).values == pytest.approx(base.values, abs=1e-12)


def test_feature_vector_validation():
    with pytest.raises(ValidationError):
        FeatureVector(values=np.zeros(11))
    with pytest.raises(ValidationError):
        FeatureVector(values=[np.nan] * 12)
    with pytest.raises(ValidationError):
        FeatureVector(values=np.zeros(12), model_label=2)
    assert FeatureVector(values=np.zeros(12)).with_label(0).model_label == 0


def test_top_singular_values_match_svd():
    rng = np.random.default_rng(0)
    U, _ = np.linalg.qr(rng.standard_normal((9, 9)))
    V, _ = np.linalg.qr(rng.standard_normal((9, 9)))
    s = np.array([10.0, 7.0, 5.0, 3.5, 2.0, 1.0, 0.5, 0.2, 0.1])
    A = U @ np.diag(s) @ V.T
    assert top_singular_values(A, 5, seed=1) == pytest.approx(s[:5], abs=1e-6)


def test_top_singular_values_ignore_row_and_column_order():
    rng = np.random.default_rng(3)
    U, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    V, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    s = np.array([6.0, 4.0, 2.5, 1.5, 0.8, 0.3])
    A = U @ np.diag(s) @ V.T
    base = top_singular_values(A, 5, seed=2)
    assert base == pytest.approx(np.linalg.svd(A, compute_uv=False)[:5], abs=1e-6)
    for _ in range(5):
        permuted = A[rng.permutation(6)][:, rng.permutation(6)]
        assert top_singular_values(permuted, 5, seed=2) == pytest.approx(base, abs=1e-6)


def test_top_singular_values_of_low_rank_matrix():
    u = np.array([1.0, 2.0, 2.0])
    values = top_singular_values(np.outer(u, u), 3)
    assert values[0] == pytest.approx(9.0)
    assert values[1:] == pytest.approx([0.0, 0.0], abs=1e-6)


def test_baseline_on_identity():
    M = CorrelationMatrix(rho=np.eye(6), kernel="pearson", layer_of=np.zeros(6))
    base = corr_baseline_features(M)
    assert base.singular == pytest.approx(np.ones(5))
    assert base.frob == pytest.approx([np.sqrt(6)] * 3)
    fv = base.as_features(model_label=0)
    assert fv.names == CORR_NAMES
    assert len(fv) == 8


def test_baseline_on_sampled_matrix():
    values = np.random.default_rng(3).standard_normal((300, 10))
    values[:, 1] += values[:, 0]
    M = correlation_matrix(ActivationTrace(values=values, layer_of=np.zeros(10)))
    base = corr_baseline_features(M)
    assert np.all(np.diff(base.singular) <= 1e-9)
    assert base.singular[0] <= 10.0
    assert base.frob[0] >= base.frob[1] >= base.frob[2] >= np.sqrt(10) - 1e-12
    assert base.frob[0] <= np.linalg.norm(M.rho) + 1e-12


def test_baseline_needs_five_neurons():
    M = CorrelationMatrix(rho=np.eye(4), kernel="cosine", layer_of=np.zeros(4))
    with pytest.raises(DegenerateDataError):
        corr_baseline_features(M)


if __name__ == "__main__":
    test_square_features()
    test_top_singular_values_match_svd()
    print("feature tests passed")
