import numpy as np
import pytest
from pydantic import ValidationError

from topo_trojan.detector import (
    DetectorModel,
    auc,
    evaluate,
    predict,
    predict_many,
    stratified_split,
    train_detector,
)
from topo_trojan.errors import DegenerateDataError, DimensionMismatchError
from topo_trojan.features import FEATURE_NAMES, FeatureVector
from topo_trojan.schema import DetectorConfig

NAMES = ["a", "b", "c"]


def feature_rows(X, y, names=NAMES):
    return [FeatureVector(values=x, names=names, model_label=int(label)) for x, label in zip(X, y)]


def separable(seed, n=40):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.standard_normal((n, 3)) + 6.0 * y[:, None]
    return feature_rows(X, y)


def test_auc_examples():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert auc([0.2, 0.2, 0.2, 0.2], [0, 1, 0, 1]) == pytest.approx(0.5)
    assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auc([0.9, 0.8, 0.1], [0, 0, 1]) == 0.0


def test_auc_ignores_monotone_rescaling():
    rng = np.random.default_rng(21)
    scores = rng.uniform(-2.0, 2.0, size=30)
    scores[:4] = scores[4]
    labels = np.repeat([0, 1], 15)
    base = auc(scores, labels)
    assert auc(np.exp(scores), labels) == pytest.approx(base)
    assert auc(3.0 * scores + 7.0, labels) == pytest.approx(base)
    assert auc(np.tanh(scores), labels) == pytest.approx(base)


def test_auc_needs_both_classes():
    with pytest.raises(DegenerateDataError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(DimensionMismatchError):
        auc([0.1, 0.2, 0.3], [1, 0])


def test_detector_learns_separable_populations():
    feats = separable(0)
    model = train_detector(feats, DetectorConfig(hidden_size=8, epochs=1000, learning_rate=0.5, seed=1))
    scores = predict_many(model, feats)
    labels = np.array([fv.model_label for fv in feats])
    assert scores[labels == 1].mean() > 0.9
    assert scores[labels == 0].mean() < 0.1
    report = evaluate(model, separable(5))
    assert report.acc == 1.0
    assert report.auc == 1.0
    assert report.n_test == 40


def test_loss_history_never_increases():
    model = train_detector(separable(2), DetectorConfig(epochs=200, learning_rate=5.0))
    history = np.array(model.loss_history)
    assert history.shape == (201,)
    assert np.all(np.diff(history) <= 0.0)
    assert history[-1] < history[0]


def test_training_is_deterministic():
    cfg = DetectorConfig(hidden_size=4, epochs=50, seed=7)
    a = train_detector(separable(3), cfg)
    b = train_detector(separable(3), cfg)
    assert np.array_equal(a.hidden_weight, b.hidden_weight)
    assert a.output_bias == b.output_bias


def test_constant_features_are_dropped():
    rng = np.random.default_rng(4)
    y = np.repeat([0, 1], 10)
    X = np.column_stack([rng.standard_normal(20) + 3 * y, np.full(20, 2.5), rng.standard_normal(20)])
    model = train_detector(feature_rows(X, y), DetectorConfig(epochs=20))
    assert model.dropped == ["b"]
    assert model.hidden_weight.shape == (32, 2)
    score = predict(model, FeatureVector(values=[0.0, 100.0, 0.0], names=NAMES))
    assert 0.0 <= score <= 1.0


def test_null_features_give_chance_auc():
    aucs = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        train = feature_rows(rng.standard_normal((40, 3)), rng.permutation(np.repeat([0, 1], 20)))
        test = feature_rows(rng.standard_normal((40, 3)), rng.permutation(np.repeat([0, 1], 20)))
        model = train_detector(train, DetectorConfig(hidden_size=8, epochs=100, seed=seed))
        aucs.append(evaluate(model, test).auc)
    assert abs(np.mean(aucs) - 0.5) <= 0.15


def test_training_input_checks():
    unlabelled = [FeatureVector(values=np.zeros(12)) for _ in range(4)]
    with pytest.raises(DegenerateDataError):
        train_detector(unlabelled, DetectorConfig())
    one_class = [FeatureVector(values=np.arange(12.0) + k, model_label=1) for k in range(4)]
    with pytest.raises(DegenerateDataError):
        train_detector(one_class, DetectorConfig())
    mixed = separable(0, n=4) + [FeatureVector(values=np.zeros(12), names=FEATURE_NAMES, model_label=0)]
    with pytest.raises(DimensionMismatchError):
        train_detector(mixed, DetectorConfig())


def test_predict_checks_feature_count():
    model = train_detector(separable(1), DetectorConfig(epochs=5))
    with pytest.raises(DimensionMismatchError):
        predict(model, FeatureVector(values=np.zeros(12)))
    assert predict_many(model, []).shape == (0,)


def test_detector_model_validation():
    with pytest.raises(ValidationError):
        DetectorModel(
            feature_names=["a"],
            kept=[0],
            mean=[0.0],
            std=[0.0],
            hidden_weight=[[1.0]],
            hidden_bias=[0.0],
            output_weight=[1.0],
            output_bias=0.0,
        )


def test_stratified_split():
    labels = np.repeat([0, 1], [12, 8])
    train, test = stratified_split(labels, 0.75, seed=3)
    assert set(train).isdisjoint(test)
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(20))
    assert np.bincount(labels[train]).tolist() == [9, 6]
    again, _ = stratified_split(labels, 0.75, seed=3)
    assert np.array_equal(train, again)


def test_split_must_leave_every_class_on_both_sides():
    labels = np.repeat([0, 1], 4)
    with pytest.raises(DegenerateDataError):
        stratified_split(labels, 0.9, seed=0)
    with pytest.raises(DegenerateDataError):
        stratified_split(labels, 0.1, seed=0)
    with pytest.raises(DegenerateDataError):
        stratified_split([0, 0, 0, 1], 0.5, seed=0)
    train, test = stratified_split(labels, 0.75, seed=0)
    assert np.bincount(labels[train]).tolist() == [3, 3]
    assert np.bincount(labels[test]).tolist() == [1, 1]


if __name__ == "__main__":
    test_auc_examples()
    test_detector_learns_separable_populations()
    test_null_features_give_chance_auc()
    print("detector tests passed")
