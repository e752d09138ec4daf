import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit
from scipy.stats import rankdata
from sklearn.model_selection import train_test_split

from .errors import DegenerateDataError, DimensionMismatchError, PipelineError
from .features import FeatureVector
from .netlab import RandomSource
from .pipeline import ModelScanner, record_features
from .schema import DetectorConfig, ModelEntry, NetworkSpec, PerturbConfig
from .trace import Kernel

logger = logging.getLogger(__name__)

STD_TOL = 1e-12
MIN_MODELS_PER_CLASS = 4


class DetectorModel(BaseModel):
    """Standardization, a tanh hidden layer and a sigmoid output unit.

    Features whose training standard deviation is below tolerance are listed in
    ``dropped`` and ignored at prediction time.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    feature_names: List[str]
    kept: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    hidden_weight: np.ndarray
    hidden_bias: np.ndarray
    output_weight: np.ndarray
    output_bias: float
    loss_history: List[float] = []

    @model_validator(mode="before")
    @classmethod
    def check_shapes(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kept = np.array(data.get("kept"), dtype=np.int64).reshape(-1)
        mean = np.array(data.get("mean"), dtype=np.float64).reshape(-1)
        std = np.array(data.get("std"), dtype=np.float64).reshape(-1)
        hidden_weight = np.array(data.get("hidden_weight"), dtype=np.float64)
        if hidden_weight.ndim != 2:
            raise ValueError(f"hidden weights must be a matrix, got shape {hidden_weight.shape}")
        if not (kept.size == mean.size == std.size == hidden_weight.shape[1]):
            raise ValueError("standardization arrays and hidden weights disagree on the feature count")
        if np.any(std <= 0):
            raise ValueError("standardization stds must be positive")
        data.update(kept=kept, mean=mean, std=std, hidden_weight=hidden_weight)
        data["hidden_bias"] = np.array(data.get("hidden_bias"), dtype=np.float64).reshape(-1)
        data["output_weight"] = np.array(data.get("output_weight"), dtype=np.float64).reshape(-1)
        return data

    @property
    def dropped(self) -> List[str]:
        kept = set(self.kept.tolist())
        return [name for k, name in enumerate(self.feature_names) if k not in kept]

    @property
    def hidden_size(self) -> int:
        return self.hidden_bias.shape[0]


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    acc: float = Field(ge=0.0, le=1.0)
    auc: float = Field(ge=0.0, le=1.0)
    n_test: int
    threshold: float = 0.5


class RepeatReport(BaseModel):
    acc_mean: float
    acc_std: float
    auc_mean: float
    auc_std: float
    reports: List[EvalReport]
    baseline_reports: List[EvalReport] = []

    @property
    def auc_median(self) -> float:
        return float(np.median([r.auc for r in self.reports]))

    @property
    def baseline_auc_median(self) -> Optional[float]:
        if not self.baseline_reports:
            return None
        return float(np.median([r.auc for r in self.baseline_reports]))


def _labelled_matrix(feats: Sequence[FeatureVector]) -> Tuple[np.ndarray, np.ndarray]:
    if not feats:
        raise DegenerateDataError("no feature vectors to train on")
    names = feats[0].names
    rows, labels = [], []
    for k, fv in enumerate(feats):
        if fv.names != names:
            raise DimensionMismatchError(len(names), len(fv.names), what=f"feature vector {k}")
        if fv.model_label is None:
            raise DegenerateDataError(f"feature vector {k} has no model label")
        rows.append(fv.values)
        labels.append(fv.model_label)
    return np.stack(rows), np.asarray(labels, dtype=np.float64)


def _forward(params: Dict[str, np.ndarray], Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    H = np.tanh(Z @ params["W1"].T + params["b1"])
    return H, H @ params["w2"] + params["b2"]


def _loss(params: Dict[str, np.ndarray], Z: np.ndarray, y: np.ndarray, l2: float) -> float:
    _, z = _forward(params, Z)
    bce = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(bce + 0.5 * l2 * (np.sum(params["W1"] ** 2) + np.sum(params["w2"] ** 2)))


def _gradients(params: Dict[str, np.ndarray], Z: np.ndarray, y: np.ndarray, l2: float) -> Dict[str, np.ndarray]:
    H, z = _forward(params, Z)
    dz = (expit(z) - y) / y.shape[0]
    dH = np.outer(dz, params["w2"]) * (1.0 - H**2)
    return {
        "W1": dH.T @ Z + l2 * params["W1"],
        "b1": dH.sum(axis=0),
        "w2": H.T @ dz + l2 * params["w2"],
        "b2": np.array(dz.sum()),
    }


def train_detector(feats: Sequence[FeatureVector], cfg: DetectorConfig) -> DetectorModel:
    """Full-batch gradient descent on L2-penalized cross-entropy.

    A step that would raise the loss is rejected and the learning rate halved, so
    the recorded loss trajectory never increases.
    """
    X, y = _labelled_matrix(feats)
    counts = np.bincount(y.astype(np.int64), minlength=2)
    if counts.min() < 2:
        raise DegenerateDataError(f"training needs at least 2 models per class, got {counts.tolist()}")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    kept = np.flatnonzero(std >= STD_TOL)
    if kept.size < X.shape[1]:
        logger.info("dropping %d constant features", X.shape[1] - kept.size)
    Z = (X[:, kept] - mean[kept]) / std[kept]

    rng = RandomSource(cfg.seed).generator
    k = kept.size
    params = {
        "W1": rng.standard_normal((cfg.hidden_size, k)) / np.sqrt(max(k, 1)),
        "b1": np.zeros(cfg.hidden_size),
        "w2": rng.standard_normal(cfg.hidden_size) / np.sqrt(cfg.hidden_size),
        "b2": np.array(0.0),
    }
    lr = cfg.learning_rate
    loss = _loss(params, Z, y, cfg.l2)
    history = [loss]
    for _ in range(cfg.epochs):
        grads = _gradients(params, Z, y, cfg.l2)
        trial = {name: params[name] - lr * grads[name] for name in params}
        trial_loss = _loss(trial, Z, y, cfg.l2)
        if trial_loss <= loss:
            params, loss = trial, trial_loss
        else:
            lr /= 2.0
        history.append(loss)
    logger.debug("detector trained: loss %.6f -> %.6f, final learning rate %.3g", history[0], history[-1], lr)

    return DetectorModel(
        feature_names=list(feats[0].names),
        kept=kept,
        mean=mean[kept],
        std=std[kept],
        hidden_weight=params["W1"],
        hidden_bias=params["b1"],
        output_weight=params["w2"],
        output_bias=float(params["b2"]),
        loss_history=history,
    )


def _standardize(model: DetectorModel, values: np.ndarray) -> np.ndarray:
    values = np.atleast_2d(values)
    if values.shape[1] != len(model.feature_names):
        raise DimensionMismatchError(len(model.feature_names), values.shape[1], what="feature vector")
    return (values[:, model.kept] - model.mean) / model.std


def predict_many(model: DetectorModel, feats: Sequence[FeatureVector]) -> np.ndarray:
    if not feats:
        return np.empty(0)
    Z = _standardize(model, np.stack([fv.values for fv in feats]))
    H = np.tanh(Z @ model.hidden_weight.T + model.hidden_bias)
    return expit(H @ model.output_weight + model.output_bias)


def predict(model: DetectorModel, feat: FeatureVector) -> float:
    return float(predict_many(model, [feat])[0])


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC: ties between a positive and a negative count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise DimensionMismatchError(scores.size, labels.size, what="label count")
    positives = int(np.sum(labels == 1))
    negatives = int(np.sum(labels == 0))
    if positives == 0 or negatives == 0:
        raise DegenerateDataError("AUC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - positives * (positives + 1) / 2.0
    return float(u / (positives * negatives))


def evaluate(model: DetectorModel, feats: Sequence[FeatureVector], threshold: float = 0.5) -> EvalReport:
    _, y = _labelled_matrix(feats)
    scores = predict_many(model, feats)
    acc = float(np.mean((scores >= threshold) == (y == 1)))
    return EvalReport(acc=acc, auc=auc(scores, y.astype(np.int64)), n_test=len(feats), threshold=threshold)


def stratified_split(labels: Sequence[int], train_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Stratified train/test indices; both parts hold every class or DegenerateDataError is raised."""
    labels = np.asarray(labels, dtype=np.int64)
    classes, counts = np.unique(labels, return_counts=True)
    n_train = int(np.floor(train_fraction * labels.size))
    n_test = labels.size - n_train
    if classes.size < 2 or counts.min() < 2:
        raise DegenerateDataError(f"a stratified split needs two classes with at least 2 models each, got counts {counts.tolist()}")
    if min(n_train, n_test) < classes.size:
        raise DegenerateDataError(
            f"train_fraction {train_fraction} splits {labels.size} models into {n_train} train and {n_test} test, "
            f"too few to hold all {classes.size} classes on both sides"
        )
    index = np.arange(labels.size)
    train, test = train_test_split(
        index,
        train_size=train_fraction,
        stratify=labels,
        random_state=int(seed) % 2**32,
    )
    for part, name in ((train, "train"), (test, "test")):
        missing = np.setdiff1d(classes, labels[part])
        if missing.size:
            raise DegenerateDataError(f"the {name} split has no model with label {missing.tolist()}")
    return np.sort(train), np.sort(test)


def _as_entries(models: Sequence[Union[ModelEntry, Tuple[NetworkSpec, int]]]) -> List[ModelEntry]:
    entries = []
    for k, model in enumerate(models):
        if isinstance(model, ModelEntry):
            entries.append(model)
        else:
            net, label = model
            entries.append(ModelEntry(model_id=f"model-{k:04d}", network=net, label=int(label)))
    return entries


def _check_population(entries: Sequence[ModelEntry]) -> None:
    labels = [e.label for e in entries]
    for cls in (0, 1):
        count = sum(label == cls for label in labels)
        if count < MIN_MODELS_PER_CLASS:
            raise DegenerateDataError(f"need at least {MIN_MODELS_PER_CLASS} models with label {cls}, got {count}")


def scan_features(
    models: Sequence[Union[ModelEntry, Tuple[NetworkSpec, int]]],
    clean_samples,
    pcfg: PerturbConfig,
    kernel: Kernel = Kernel.PEARSON,
    cutoff: float = 2.0,
    include_baseline: bool = False,
    max_parallel_models: int = 1,
    output_file: Optional[str] = None,
    enable_progress: bool = True,
) -> Tuple[List[FeatureVector], List[FeatureVector]]:
    """Topological (and optionally Corr baseline) features for every model, in input order."""
    entries = _as_entries(models)
    scanner = ModelScanner(
        clean_samples,
        pcfg,
        kernel=kernel,
        cutoff=cutoff,
        include_baseline=include_baseline,
        max_parallel_models=max_parallel_models,
        output_file=output_file,
        enable_file_output=output_file is not None,
        enable_progress=enable_progress,
    )
    records = scanner.scan_all(entries)
    for record in records:
        if not record["success"]:
            raise PipelineError(record["index"], record["id"], record["errors"])
    topo = [record_features(r) for r in records]
    baseline = [record_features(r, baseline=True) for r in records] if include_baseline else []
    return topo, baseline


def _split_and_score(feats: Sequence[FeatureVector], dcfg: DetectorConfig) -> EvalReport:
    labels = [fv.model_label for fv in feats]
    train, test = stratified_split(labels, dcfg.train_fraction, dcfg.seed)
    model = train_detector([feats[k] for k in train], dcfg)
    return evaluate(model, [feats[k] for k in test])


def run_pipeline(
    models: Sequence[Union[ModelEntry, Tuple[NetworkSpec, int]]],
    clean_samples,
    pcfg: PerturbConfig,
    dcfg: DetectorConfig,
    **scan_options,
) -> EvalReport:
    entries = _as_entries(models)
    _check_population(entries)
    feats, _ = scan_features(entries, clean_samples, pcfg, **scan_options)
    report = _split_and_score(feats, dcfg)
    logger.info("pipeline: test ACC %.3f AUC %.3f on %d models", report.acc, report.auc, report.n_test)
    return report


def repeat_protocol(
    models: Sequence[Union[ModelEntry, Tuple[NetworkSpec, int]]],
    clean_samples,
    pcfg: PerturbConfig,
    dcfg: DetectorConfig,
    repeats: int = 5,
    include_baseline: bool = False,
    **scan_options,
) -> RepeatReport:
    """Features are computed once; each repeat re-splits and retrains with seed ``dcfg.seed + r``."""
    entries = _as_entries(models)
    _check_population(entries)
    feats, baseline = scan_features(entries, clean_samples, pcfg, include_baseline=include_baseline, **scan_options)
    reports, baseline_reports = [], []
    for r in range(repeats):
        cfg = dcfg.model_copy(update={"seed": (dcfg.seed + r) % 2**64})
        reports.append(_split_and_score(feats, cfg))
        if include_baseline:
            baseline_reports.append(_split_and_score(baseline, cfg))
    accs = np.array([rep.acc for rep in reports])
    aucs = np.array([rep.auc for rep in reports])
    return RepeatReport(
        acc_mean=float(accs.mean()),
        acc_std=float(accs.std()),
        auc_mean=float(aucs.mean()),
        auc_std=float(aucs.std()),
        reports=reports,
        baseline_reports=baseline_reports,
    )
