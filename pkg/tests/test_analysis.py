import numpy as np
import pytest
from scipy import stats

from topo_trojan.analysis import (
    ShortcutStats,
    compare_shortcuts,
    death_edge_lengths,
    edge_length,
    longest_cycle_edge_lengths,
    population_report,
    shortcut_stats,
    welch_t_test,
)
from topo_trojan.complex import build_filtration
from topo_trojan.errors import DegenerateDataError, DimensionMismatchError
from topo_trojan.features import FeatureVector
from topo_trojan.persistence import compute_diagrams, extract_cycles
from topo_trojan.trace import DissimilarityMatrix


def layered_square():
    w = np.full((4, 4), 0.8)
    for i, j in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        w[i, j] = w[j, i] = 0.3
    np.fill_diagonal(w, 0.0)
    return build_filtration(DissimilarityMatrix(w=w, layer_of=[0, 0, 1, 1]), 2.0)


def test_welch_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.normal(0.0, 1.0, size=int(rng.integers(3, 40)))
        b = rng.normal(0.4, 2.5, size=int(rng.integers(3, 40)))
        result = welch_t_test(a, b)
        expected = stats.ttest_ind(a, b, equal_var=False)
        assert result.t_stat == pytest.approx(expected.statistic, rel=1e-9)
        assert result.p_value == pytest.approx(expected.pvalue, rel=1e-7)


def test_welch_direction_and_means():
    result = welch_t_test([1.0, 2.0, 3.0], [5.0, 6.0, 8.0])
    assert result.mean_a == pytest.approx(2.0)
    assert result.mean_b == pytest.approx(19.0 / 3.0)
    assert result.direction == "a<b"
    assert result.t_stat < 0
    assert welch_t_test([3.0, 4.0], [1.0, 2.0]).direction == "a>b"


def test_welch_zero_variance():
    same = welch_t_test([1.0, 1.0, 1.0], [1.0, 1.0])
    assert same.p_value == 1.0
    assert same.t_stat == 0.0
    assert same.direction == "a=b"
    apart = welch_t_test([1.0, 1.0], [2.0, 2.0])
    assert apart.p_value == 0.0
    assert apart.t_stat == float("-inf")


def test_welch_needs_two_values():
    with pytest.raises(DegenerateDataError):
        welch_t_test([1.0], [1.0, 2.0])


def test_edge_length():
    layer_of = [0, 0, 1, 2]
    assert edge_length(0, 1, layer_of) == 0
    assert edge_length(3, 0, layer_of) == 2


def test_death_edge_lengths_latest_first():
    F = layered_square()
    dg0, _ = compute_diagrams(F)
    assert death_edge_lengths(F, dg0, top_k=10) == [1, 1, 0]
    assert death_edge_lengths(F, dg0, top_k=2) == [1, 1]
    assert death_edge_lengths(F, dg0, top_k=0) == []


def test_longest_cycle_edge_lengths():
    F = layered_square()
    assert longest_cycle_edge_lengths(extract_cycles(F), top_k=5) == [1]


def test_shortcut_stats_pooling():
    result = shortcut_stats([[1, 1], [0]], [[1], []])
    assert result.mean_death_edge_length == pytest.approx(2.0 / 3.0)
    assert result.mean_longest_cycle_edge_length == pytest.approx(1.0)
    assert result.death_edge_lengths == [1, 1, 0]
    empty = shortcut_stats([], [])
    assert empty.mean_death_edge_length == 0.0


def test_compare_shortcuts_tests_each_pooled_kind():
    clean = shortcut_stats([[0, 1, 0], [1, 0]], [[1], [1, 2]])
    trojan = shortcut_stats([[2, 2, 1], [2, 1]], [[2]])
    report = compare_shortcuts(clean, trojan)
    assert list(report) == ["death_edge_length"]
    deaths = report["death_edge_length"]
    expected = stats.ttest_ind(clean.death_edge_lengths, trojan.death_edge_lengths, equal_var=False)
    assert deaths.t_stat == pytest.approx(expected.statistic)
    assert deaths.p_value == pytest.approx(expected.pvalue)
    assert deaths.direction == "a<b"

    both = compare_shortcuts(clean, shortcut_stats([[2, 2]], [[2], [3]]))
    assert list(both) == ["death_edge_length", "longest_cycle_edge_length"]
    assert both["longest_cycle_edge_length"].mean_b == pytest.approx(2.5)
    assert compare_shortcuts(ShortcutStats(mean_death_edge_length=0.0, mean_longest_cycle_edge_length=0.0), clean) == {}


def test_population_report_flags_shifted_feature():
    rng = np.random.default_rng(2)
    clean = [FeatureVector(values=rng.normal(0.0, 0.1, size=12), model_label=0) for _ in range(30)]
    trojan = []
    for _ in range(30):
        values = rng.normal(0.0, 0.1, size=12)
        values[6] += 1.0
        trojan.append(FeatureVector(values=values, model_label=1))
    report = population_report(clean, trojan)
    assert list(report) == clean[0].names
    assert report["f11"].p_value < 1e-10
    assert report["f11"].direction == "a<b"


def test_population_report_checks_inputs():
    fv = FeatureVector(values=np.zeros(12))
    other = FeatureVector(values=np.zeros(8), names=[f"x{k}" for k in range(8)])
    with pytest.raises(DegenerateDataError):
        population_report([], [fv])
    with pytest.raises(DimensionMismatchError):
        population_report([fv, fv], [other, other])


if __name__ == "__main__":
    test_welch_matches_scipy()
    test_death_edge_lengths_latest_first()
    print("analysis tests passed")
