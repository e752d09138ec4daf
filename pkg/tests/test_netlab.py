import numpy as np
import pytest
from pydantic import ValidationError

from topo_trojan.errors import DimensionMismatchError
from topo_trojan.netlab import (
    Dataset,
    RandomSource,
    attack_success_rate,
    build_bayes_f2,
    build_model_zoo,
    build_theorem_networks,
    empirical_risk,
    eval_batch,
    eval_network,
    overlay_trigger,
    perturb_pixelwise,
    poison_dataset,
    sample_gaussian_pair,
    train_network,
)
from topo_trojan.schema import (
    Activation,
    GaussianPairConfig,
    LayerSpec,
    NetworkSpec,
    OutputRule,
    PerturbConfig,
    TrainConfig,
    TriggerSpec,
    ZooConfig,
)


def identity_net(d=2):
    return NetworkSpec(
        layers=[LayerSpec(weight=np.eye(d), bias=np.zeros(d), activation=Activation.IDENTITY)],
        output_rule=OutputRule.IDENTITY,
    )


def test_theorem_network_predictions():
    f1, f2 = build_theorem_networks()
    _, pred = eval_network(f1, [1.0, 0.0])
    assert pred == 0
    _, pred = eval_network(f1, [-1.0, 0.5])
    assert pred == 1
    _, pred = eval_network(f2, [1.0, 1.0])
    assert pred == 1
    _, pred = eval_network(f2, [1.0, -1.0])
    assert pred == 0


def test_theorem_network_shapes_and_biases():
    f1, f2 = build_theorem_networks()
    assert np.array_equal(f1.layers[1].bias, [-1.0, -1.0, -1.0, -1.0])
    assert np.array_equal(f2.layers[1].bias, [-2.0, -2.0, -2.0, -2.0])
    for net in (f1, f2):
        acts, _ = eval_network(net, [0.3, -0.2])
        assert acts.shape == (8,)
        assert np.array_equal(net.layer_of, [0, 0, 0, 0, 1, 1, 1, 1])


def test_theorem_networks_embed_in_higher_dimension():
    f1, f2 = build_theorem_networks(input_dim=5)
    assert f1.input_dim == 5
    assert np.array_equal(f2.layers[0].weight[:, 2:], np.zeros((4, 3)))
    _, pred = eval_network(f2, [-1.0, -2.0, 7.0, 7.0, 7.0])
    assert pred == 1


def test_closed_forms_on_random_points():
    f1, f2 = build_theorem_networks()
    rng = np.random.default_rng(3)
    X = rng.standard_normal((500, 2))
    acts1, pred1 = eval_batch(f1, X)
    acts2, pred2 = eval_batch(f2, X)
    assert np.array_equal(pred1, (X[:, 0] < 0).astype(int))
    assert np.array_equal(pred2, (X[:, 0] * X[:, 1] >= 0).astype(int))
    for acts in (acts1, acts2):
        assert set(np.unique(acts)) <= {0.0, 1.0}
    assert np.array_equal(acts1[:, 0], acts1[:, 2])
    assert np.array_equal(acts1[:, 0] + acts1[:, 1], np.ones(500))


def test_bayes_f2_swaps_only_the_output():
    _, f2 = build_theorem_networks()
    bayes = build_bayes_f2()
    X = np.random.default_rng(5).standard_normal((200, 2))
    acts, pred = eval_batch(f2, X)
    acts_b, pred_b = eval_batch(bayes, X)
    assert np.array_equal(acts, acts_b)
    assert np.array_equal(pred_b, 1 - pred)


def test_identity_network_passes_inputs_through():
    acts, pred = eval_network(identity_net(), [0.3, -0.7])
    assert np.array_equal(acts, [0.3, -0.7])
    assert pred == 0


def test_dimension_mismatch_names_layer():
    f1, _ = build_theorem_networks()
    with pytest.raises(DimensionMismatchError) as info:
        eval_network(f1, [1.0, 2.0, 3.0])
    assert info.value.layer == 0
    assert info.value.expected == 2


def test_network_spec_validation():
    with pytest.raises(ValidationError):
        LayerSpec(weight=[[1.0, np.inf]], bias=[0.0])
    with pytest.raises(ValidationError):
        NetworkSpec(
            layers=[
                LayerSpec(weight=np.ones((3, 2)), bias=np.zeros(3)),
                LayerSpec(weight=np.ones((2, 4)), bias=np.zeros(2)),
            ]
        )


def test_gaussian_pair_means():
    cfg = GaussianPairConfig(sigma=1.0, eta=np.exp(-1.0))
    assert np.allclose(cfg.means(), [[-2, -2], [2, -2], [-2, 2], [2, 2]])


def test_sample_gaussian_pair_d1_means_converge():
    data = sample_gaussian_pair(GaussianPairConfig(sigma=1.0, eta=np.exp(-1.0), which="D1", sample_count=20000, seed=1))
    assert np.allclose(data.X[data.y == 1].mean(axis=0), [-2.0, -2.0], atol=0.05)
    assert np.allclose(data.X[data.y == 0].mean(axis=0), [2.0, -2.0], atol=0.05)


def test_sample_gaussian_pair_d3_labels_mixed_quadrants():
    data = sample_gaussian_pair(GaussianPairConfig(which="D3", sample_count=5000, seed=2))
    mixed = (data.X[:, 0] > 0) != (data.X[:, 1] > 0)
    assert np.mean(mixed == (data.y == 1)) > 0.99


def test_sample_gaussian_pair_is_deterministic():
    cfg = GaussianPairConfig(which="D2", sample_count=300, seed=11, input_dim=4)
    a, b = sample_gaussian_pair(cfg), sample_gaussian_pair(cfg)
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.y, b.y)
    assert a.X.shape == (300, 4)


def test_random_source_spawn():
    assert RandomSource(10).spawn(3).seed == 13
    assert RandomSource(2**64 - 1).spawn(1).seed == 0


def test_overlay_trigger():
    x = np.array([1.0, 2.0])
    assert np.array_equal(overlay_trigger(x, TriggerSpec(mask=[0, 0], pattern=[4, 9])), x)
    assert np.array_equal(overlay_trigger(x, TriggerSpec(mask=[1, 1], pattern=[4, 9])), [4.0, 9.0])
    assert np.allclose(overlay_trigger(x, TriggerSpec(mask=[0.5, 0], pattern=[4, 9])), [2.5, 2.0])


def test_overlay_trigger_idempotent_for_binary_mask():
    trig = TriggerSpec(mask=[1, 0, 1], pattern=[0.2, 0.4, 0.6])
    x = np.array([5.0, 6.0, 7.0])
    once = overlay_trigger(x, trig)
    assert np.array_equal(overlay_trigger(once, trig), once)
    with pytest.raises(DimensionMismatchError):
        overlay_trigger([1.0, 2.0], trig)


def test_trigger_mask_range_checked():
    with pytest.raises(ValidationError):
        TriggerSpec(mask=[1.5], pattern=[0.0])


def test_perturb_changes_one_coordinate_per_copy():
    X = np.full((1, 4), 5.0)
    out = perturb_pixelwise(X, PerturbConfig(trials_per_image=3, patch_size=1, seed=4))
    assert out.shape == (3, 4)
    assert np.array_equal((out != 5.0).sum(axis=1), [1, 1, 1])
    assert np.all((out[out != 5.0] >= 0.0) & (out[out != 5.0] <= 1.0))


def test_perturb_patch_is_contiguous():
    X = np.full((2, 10), -3.0)
    out = perturb_pixelwise(X, PerturbConfig(trials_per_image=20, patch_size=3, seed=9))
    for row in out:
        changed = np.flatnonzero(row != -3.0)
        assert changed.size == 3
        assert changed[-1] - changed[0] == 2


def test_perturb_degenerate_range():
    X = np.zeros((2, 3))
    out = perturb_pixelwise(X, PerturbConfig(trials_per_image=4, ranges=[(0.7, 0.7)], seed=0))
    assert np.all((out == 0.0) | (out == 0.7))
    assert np.array_equal((out == 0.7).sum(axis=1), np.ones(8))


def test_perturb_counts_and_grouping():
    X = np.arange(15, dtype=float).reshape(5, 3) + 10.0
    out = perturb_pixelwise(X, PerturbConfig(trials_per_image=10, seed=1))
    assert out.shape == (50, 3)
    for i in range(5):
        group = out[i * 10 : (i + 1) * 10]
        assert np.all((group == X[i]).sum(axis=1) == 2)


def test_perturb_per_image_ranges():
    X = np.full((2, 2), 9.0)
    cfg = PerturbConfig(trials_per_image=5, ranges=[(0.0, 0.0), ([1.0, 1.0], [1.0, 1.0])], seed=3)
    out = perturb_pixelwise(X, cfg)
    assert set(np.unique(out[:5])) <= {0.0, 9.0}
    assert set(np.unique(out[5:])) <= {1.0, 9.0}


def test_perturb_empty_and_errors():
    assert perturb_pixelwise(np.empty((0, 3)), PerturbConfig()).shape == (0, 3)
    with pytest.raises(DimensionMismatchError):
        perturb_pixelwise(np.zeros((1, 2)), PerturbConfig(patch_size=3))
    with pytest.raises(DimensionMismatchError):
        perturb_pixelwise(np.zeros((3, 2)), PerturbConfig(ranges=[(0, 1), (0, 1)]))
    with pytest.raises(ValidationError):
        PerturbConfig(ranges=[(1.0, 0.0)])


def test_perturb_is_reproducible():
    X = np.random.default_rng(0).standard_normal((4, 6))
    cfg = PerturbConfig(trials_per_image=7, patch_size=2, ranges=[(-1, 1)], seed=123)
    assert np.array_equal(perturb_pixelwise(X, cfg), perturb_pixelwise(X, cfg))
    assert not np.array_equal(perturb_pixelwise(X, cfg), perturb_pixelwise(X, cfg.with_seed(124)))


def test_theorem_risks_monte_carlo():
    f1, f2 = build_theorem_networks()
    eta, n = 0.05, 20000
    slack = eta + 3 * np.sqrt(eta / n)
    d1 = sample_gaussian_pair(GaussianPairConfig(eta=eta, which="D1", sample_count=n, seed=1))
    d3 = sample_gaussian_pair(GaussianPairConfig(eta=eta, which="D3", sample_count=n, seed=2))
    d2 = sample_gaussian_pair(GaussianPairConfig(eta=eta, which="D2", sample_count=n, seed=3))
    assert empirical_risk(f1, d1) <= slack
    assert empirical_risk(build_bayes_f2(), d3) <= slack
    assert 0.48 <= empirical_risk(f2, d2) <= 0.52


def test_attack_success_rate_and_poisoning():
    f1, _ = build_theorem_networks()
    trig = TriggerSpec(mask=[1.0, 0.0], pattern=[-5.0, 0.0], target_label=1)
    X = np.random.default_rng(0).uniform(0.5, 2.0, size=(50, 2))
    assert attack_success_rate(f1, X, trig) == 1.0

    data = Dataset(X, np.zeros(50, dtype=np.int64))
    poisoned = poison_dataset(data, trig, fraction=0.2, seed=1)
    assert len(poisoned) == 60
    assert np.array_equal(poisoned.X[:50], X)
    assert np.all(poisoned.y[50:] == 1)
    assert np.all(poisoned.X[50:, 0] == -5.0)


def test_train_network_fits_separable_data():
    data = sample_gaussian_pair(GaussianPairConfig(which="D1", sample_count=300, seed=5))
    net = train_network(data.X, data.y, TrainConfig(hidden=(8, 8), epochs=300, seed=5))
    assert net.hidden_size == 16
    assert empirical_risk(net, data) <= 0.05
    again = train_network(data.X, data.y, TrainConfig(hidden=(8, 8), epochs=300, seed=5))
    assert np.array_equal(net.layers[0].weight, again.layers[0].weight)


def test_build_model_zoo_labels_and_ids():
    zoo = build_model_zoo(
        ZooConfig(n_clean=2, n_trojan=2, samples_per_model=40, train=TrainConfig(hidden=(4,), epochs=5), seed=3)
    )
    assert [e.model_id for e in zoo] == ["clean-0000", "clean-0001", "trojan-0002", "trojan-0003"]
    assert [e.label for e in zoo] == [0, 0, 1, 1]
    assert all(e.network.hidden_size == 4 for e in zoo)


if __name__ == "__main__":
    test_theorem_network_predictions()
    test_closed_forms_on_random_points()
    test_theorem_risks_monte_carlo()
    print("netlab tests passed")
