import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import DegenerateDataError, DimensionMismatchError, TopoTrojanError
from .schema import (
    Activation,
    GaussianPairConfig,
    LayerSpec,
    ModelEntry,
    NetworkSpec,
    OutputRule,
    PerturbConfig,
    TrainConfig,
    TriggerSpec,
    U64,
    ZooConfig,
)

logger = logging.getLogger(__name__)


class Dataset(NamedTuple):
    X: np.ndarray
    y: Optional[np.ndarray]

    def __len__(self) -> int:
        return self.X.shape[0]


class RandomSource:
    """Seeded PCG64 generator; tasks derive their own stream as ``seed + task_index``."""

    algorithm = "PCG64"

    def __init__(self, seed: int):
        self.seed = int(seed) % U64
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, task_index: int) -> "RandomSource":
        return RandomSource(self.seed + int(task_index))


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.INDICATOR:
        return (z >= 0).astype(np.float64)
    if activation == Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def eval_batch(net: NetworkSpec, X) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate ``net`` on every row of ``X``.

    Returns the hidden activations (n x total hidden neurons, layer order) and the
    predicted classes.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.input_dim:
        raise DimensionMismatchError(net.input_dim, X.shape[1], layer=0)

    hidden_count = len(net.hidden_layers)
    h = X
    hidden = []
    for k, layer in enumerate(net.layers):
        if h.shape[1] != layer.cols:
            raise DimensionMismatchError(layer.cols, h.shape[1], layer=k)
        h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
        if k < hidden_count:
            hidden.append(h)

    activations = np.concatenate(hidden, axis=1) if hidden else np.empty((X.shape[0], 0))
    return activations, np.argmax(h, axis=1)


def eval_network(net: NetworkSpec, x) -> Tuple[np.ndarray, int]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError(net.input_dim, x.size, layer=0)
    activations, prediction = eval_batch(net, x[None, :])
    return activations[0], int(prediction[0])


def _embed_rows(rows: np.ndarray, input_dim: int) -> np.ndarray:
    if input_dim < rows.shape[1]:
        raise DimensionMismatchError(rows.shape[1], input_dim, what="theorem network input")
    padded = np.zeros((rows.shape[0], input_dim))
    padded[:, : rows.shape[1]] = rows
    return padded


_SIGNED_AXES = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def _theorem_network(first: np.ndarray, second: np.ndarray, second_bias: float, output: np.ndarray, input_dim: int) -> NetworkSpec:
    return NetworkSpec(
        layers=[
            LayerSpec(weight=_embed_rows(first, input_dim), bias=np.zeros(4), activation=Activation.INDICATOR),
            LayerSpec(weight=second, bias=np.full(4, second_bias), activation=Activation.INDICATOR),
            LayerSpec(weight=output, bias=np.zeros(2), activation=Activation.IDENTITY),
        ],
        output_rule=OutputRule.ARGMAX,
    )


_F2_AND = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
    ]
)


def build_theorem_networks(input_dim: int = 2) -> Tuple[NetworkSpec, NetworkSpec]:
    """The two constructive 4+4 indicator networks.

    f1(x) = 1{x.e1 < 0}: first layer (e1, -e1, e1, -e1), second layer copies it.
    f2(x) = 1{(x.e1)(x.e2) >= 0}: first layer (e1, -e1, e2, -e2), second layer
    takes the four pairwise ANDs of a sign of x1 with a sign of x2.
    Output rows score class 0 and class 1; ties resolve to class 0.
    """
    f1_first = _SIGNED_AXES[[0, 1, 0, 1]]
    f1 = _theorem_network(
        f1_first,
        np.eye(4),
        -1.0,
        np.array([[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]),
        input_dim,
    )
    f2 = _theorem_network(
        _SIGNED_AXES,
        _F2_AND,
        -2.0,
        np.array([[0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0]]),
        input_dim,
    )
    return f1, f2


def build_bayes_f2(input_dim: int = 2) -> NetworkSpec:
    """f2's hidden layers with the output rows swapped: predicts 1 on mixed-sign quadrants.

    This is the Bayes classifier for D3 labels 1{j in {2,3}}; its hidden neurons,
    and hence its correlation matrices and diagrams, are identical to f2's.
    """
    return _theorem_network(
        _SIGNED_AXES,
        _F2_AND,
        -2.0,
        np.array([[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]]),
        input_dim,
    )


def sample_gaussian_pair(cfg: GaussianPairConfig) -> Dataset:
    rng = RandomSource(cfg.seed).generator
    means = cfg.means()
    if cfg.which == "D1":
        index = rng.integers(1, 3, size=cfg.sample_count)
        labels = index % 2
    else:
        index = rng.integers(1, 5, size=cfg.sample_count)
        if cfg.which == "D2":
            labels = index % 2
        else:
            labels = ((index == 2) | (index == 3)).astype(np.int64)
    noise = rng.standard_normal((cfg.sample_count, cfg.input_dim))
    X = means[index - 1] + cfg.sigma * noise
    return Dataset(X, labels.astype(np.int64))


def overlay_trigger(x, trig: TriggerSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != trig.dim:
        raise DimensionMismatchError(trig.dim, x.shape[-1], what="trigger")
    return (1.0 - trig.mask) * x + trig.mask * trig.pattern


def perturb_pixelwise(X, cfg: PerturbConfig) -> np.ndarray:
    """Each image yields ``trials_per_image`` copies, each with one contiguous patch resampled.

    Rows come out grouped by image, in input order.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.empty((0, X.shape[1] if X.ndim == 2 else 0))
    X = np.atleast_2d(X)
    n_images, d = X.shape
    if cfg.patch_size > d:
        raise DimensionMismatchError(d, cfg.patch_size, what="patch size")
    if len(cfg.ranges) > 1 and len(cfg.ranges) != n_images:
        raise DimensionMismatchError(n_images, len(cfg.ranges), what="perturbation range count")

    rng = RandomSource(cfg.seed).generator
    n = cfg.trials_per_image
    offsets = np.arange(cfg.patch_size)
    out = np.repeat(X, n, axis=0)
    for i in range(n_images):
        lo, hi = cfg.range_for(i, d)
        starts = rng.integers(0, d - cfg.patch_size + 1, size=n)
        u = rng.random((n, cfg.patch_size))
        cols = starts[:, None] + offsets[None, :]
        rows = np.arange(i * n, (i + 1) * n)[:, None]
        out[rows, cols] = lo[cols] + (hi[cols] - lo[cols]) * u
    return out


def empirical_risk(net: NetworkSpec, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise DegenerateDataError("empirical risk needs at least one sample")
    _, predictions = eval_batch(net, dataset.X)
    return float(np.mean(predictions != dataset.y))


def attack_success_rate(net: NetworkSpec, X, trig: TriggerSpec) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise DegenerateDataError("attack success rate needs at least one input")
    _, predictions = eval_batch(net, overlay_trigger(X, trig))
    return float(np.mean(predictions == trig.target_label))


def poison_dataset(
    dataset: Dataset,
    trig: TriggerSpec,
    fraction: float,
    source_label: Optional[int] = None,
    seed: int = 0,
) -> Dataset:
    """Clean set followed by a triggered copy of a random ``fraction`` of its samples.

    Triggered samples are relabelled to the trigger's target; ``source_label``
    restricts poisoning to one class.
    """
    if not 0.0 <= fraction <= 1.0:
        raise TopoTrojanError(f"poison fraction must lie in [0, 1], got {fraction}")
    candidates = np.arange(len(dataset))
    if source_label is not None:
        candidates = candidates[dataset.y == source_label]
    rng = RandomSource(seed).generator
    count = int(round(fraction * candidates.size))
    chosen = np.sort(rng.choice(candidates, size=count, replace=False)) if count else candidates[:0]
    triggered = overlay_trigger(dataset.X[chosen], trig)
    X = np.concatenate([dataset.X, triggered.reshape(-1, dataset.X.shape[1])], axis=0)
    y = np.concatenate([dataset.y, np.full(count, trig.target_label, dtype=np.int64)])
    return Dataset(X, y)


def train_network(X, y, cfg: TrainConfig, n_classes: int = 2) -> NetworkSpec:
    """Full-batch gradient descent on softmax cross-entropy for a ReLU MLP.

    Inputs are standardized during training and the scaling is folded back into
    the first layer, so the returned network takes raw inputs.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(X.shape[0], y.shape[0], what="label count")
    if X.shape[0] < 2:
        raise DegenerateDataError("training needs at least two samples")

    mu = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    Z = (X - mu) / scale

    rng = RandomSource(cfg.seed).generator
    sizes = [X.shape[1], *cfg.hidden, n_classes]
    weights = [rng.standard_normal((sizes[k + 1], sizes[k])) * np.sqrt(2.0 / sizes[k]) for k in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[k + 1]) for k in range(len(sizes) - 1)]
    onehot = np.eye(n_classes)[y]
    n = X.shape[0]

    for _ in range(cfg.epochs):
        outs = [Z]
        for k in range(len(weights)):
            z = outs[-1] @ weights[k].T + biases[k]
            outs.append(np.maximum(z, 0.0) if k < len(weights) - 1 else z)
        logits = outs[-1] - outs[-1].max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)

        delta = (probs - onehot) / n
        for k in range(len(weights) - 1, -1, -1):
            grad_w = delta.T @ outs[k]
            grad_b = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ weights[k]) * (outs[k] > 0)
            weights[k] -= cfg.learning_rate * grad_w
            biases[k] -= cfg.learning_rate * grad_b

    first = weights[0] / scale
    layers = [LayerSpec(weight=first, bias=biases[0] - first @ mu, activation=Activation.RELU)]
    for k in range(1, len(weights)):
        activation = Activation.RELU if k < len(weights) - 1 else Activation.IDENTITY
        layers.append(LayerSpec(weight=weights[k], bias=biases[k], activation=activation))
    return NetworkSpec(layers=layers, output_rule=OutputRule.ARGMAX)


def build_model_zoo(cfg: ZooConfig) -> List[ModelEntry]:
    """Clean models (label 0) fit to D1 samples, Trojaned models (label 1) fit to D3 samples.

    Model k uses seed ``cfg.seed + k`` for both its training data and its initialization.
    """
    entries = []
    plan = [("clean", "D1", 0)] * cfg.n_clean + [("trojan", "D3", 1)] * cfg.n_trojan
    for k, (kind, which, label) in enumerate(plan):
        seed = (cfg.seed + k) % U64
        data = sample_gaussian_pair(
            GaussianPairConfig(
                sigma=cfg.sigma,
                eta=cfg.eta,
                input_dim=cfg.input_dim,
                which=which,
                sample_count=cfg.samples_per_model,
                seed=seed,
            )
        )
        net = train_network(data.X, data.y, cfg.train.model_copy(update={"seed": seed}))
        entries.append(ModelEntry(model_id=f"{kind}-{k:04d}", network=net, label=label))
        logger.debug("trained %s model %d: train risk %.3f", kind, k, empirical_risk(net, data))
    return entries

