"""Desk-scale runs. Deselected by default; run with ``pytest -m slow``."""

import time

import numpy as np
import pytest

from topo_trojan.analysis import welch_t_test
from topo_trojan.complex import build_filtration
from topo_trojan.detector import repeat_protocol, scan_features
from topo_trojan.experiments import bench_table, convergence_table, random_correlation_matrix, theorem1_report
from topo_trojan.features import FEATURE_NAMES
from topo_trojan.netlab import build_model_zoo, sample_gaussian_pair
from topo_trojan.persistence import compute_diagrams, naive_reduce
from topo_trojan.schema import DetectorConfig, GaussianPairConfig, PerturbConfig, ZooConfig
from topo_trojan.trace import DissimilarityMatrix

pytestmark = pytest.mark.slow


def random_dissimilarity(rng, m):
    a = rng.uniform(0.0, 2.0, (m, m))
    w = np.triu(a, 1)
    w = w + w.T
    return DissimilarityMatrix(w=w, layer_of=np.zeros(m, dtype=np.int64))


def test_diagrams_match_naive_reduction_on_many_inputs():
    rng = np.random.default_rng(2024)
    for _ in range(500):
        F = build_filtration(random_dissimilarity(rng, int(rng.integers(2, 13))), float(rng.uniform(0.5, 2.0)))
        dg0, dg1 = compute_diagrams(F)
        assert (dg0 + dg1).multiset() == naive_reduce(F).multiset()


def test_theorem_reproduction_at_full_sample_size():
    report = theorem1_report(sample_count=50_000, eta=0.05, seed=0)
    assert report.risk_f1_d1 <= 0.05 + 0.02
    assert report.risk_f2_d3 >= 0.9
    assert report.risk_bayes_f2_d3 <= 0.05 + 0.02
    assert 0.48 <= report.risk_f2_d2 <= 0.52
    for gap in report.gaps:
        assert gap.sampled_db == pytest.approx(gap.analytic_db, abs=0.02)


def test_convergence_on_default_grid():
    report = convergence_table(seeds=5, enable_progress=False)
    medians = [row.median_db for row in report.rows]
    assert all(b < a for a, b in zip(medians, medians[1:]))
    assert -0.75 <= report.slope <= -0.25


def test_bench_on_dense_matrices():
    rows = []
    for k in range(20):
        start = time.perf_counter()
        (row,) = bench_table([(f"random-300-seed{k}", random_correlation_matrix(300, seed=k))], enable_progress=False)
        assert time.perf_counter() - start < 60.0, row.source
        assert row.nonzero <= row.full_nonzero
        rows.append(row)
    assert sum(row.within_ratio for row in rows) >= 16


@pytest.fixture(scope="module")
def zoo_features():
    zoo = build_model_zoo(ZooConfig(n_clean=40, n_trojan=40, seed=0))
    clean = sample_gaussian_pair(GaussianPairConfig(which="D1", sample_count=20, seed=99)).X
    pcfg = PerturbConfig(trials_per_image=200, ranges=[(-4.0, 4.0)], seed=5)
    return zoo, clean, pcfg


def test_detection_on_trained_zoo(zoo_features):
    zoo, clean, pcfg = zoo_features
    result = repeat_protocol(zoo, clean, pcfg, DetectorConfig(), repeats=5, include_baseline=True, enable_progress=False)
    assert result.auc_median >= 0.8
    assert result.auc_median >= result.baseline_auc_median


def test_population_separation_on_trained_zoo(zoo_features):
    zoo, clean, pcfg = zoo_features
    feats, _ = scan_features(zoo, clean, pcfg, enable_progress=False)
    labels = np.array([fv.model_label for fv in feats])
    table = np.array([fv.values for fv in feats])
    for name in ("f04", "f11"):
        column = table[:, FEATURE_NAMES.index(name)]
        assert welch_t_test(column[labels == 0], column[labels == 1]).p_value < 0.05
