import logging
from enum import Enum
from typing import Any, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DegenerateDataError
from .netlab import eval_batch
from .schema import NetworkSpec

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-12
MOMENT_CHUNK = 4096


class Kernel(str, Enum):
    PEARSON = "pearson"
    COSINE = "cosine"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class ActivationTrace(BaseModel):
    """Hidden activations: one row per input, one column per neuron."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    layer_of: np.ndarray
    neuron_ids: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def check_trace(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        values = np.array(data.get("values"), dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"trace values must be a 2-d array, got shape {values.shape}")
        n, m = values.shape
        if n < 2:
            raise ValueError(f"a trace needs at least 2 samples, got {n}")
        if not np.all(np.isfinite(values)):
            raise ValueError("trace values must be finite")
        layer_of = np.array(data.get("layer_of"), dtype=np.int64).reshape(-1)
        if layer_of.shape[0] != m:
            raise ValueError(f"layer_of has {layer_of.shape[0]} entries for {m} neurons")
        if np.any(np.diff(layer_of) < 0):
            raise ValueError("layer_of must be non-decreasing in neuron order")
        ids = data.get("neuron_ids")
        ids = np.arange(m, dtype=np.int64) if ids is None else np.array(ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != m:
            raise ValueError(f"neuron_ids has {ids.shape[0]} entries for {m} neurons")
        data["values"] = _readonly(values)
        data["layer_of"] = _readonly(layer_of)
        data["neuron_ids"] = _readonly(ids)
        return data

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.values.shape[1]


def _check_square(rho: np.ndarray, layer_of: np.ndarray, name: str) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{name} must be square, got shape {rho.shape}")
    if layer_of.shape[0] != rho.shape[0]:
        raise ValueError(f"layer_of has {layer_of.shape[0]} entries for a {rho.shape[0]}x{rho.shape[0]} {name}")
    if not np.all(np.isfinite(rho)):
        raise ValueError(f"{name} must be finite")
    if not np.array_equal(rho, rho.T):
        raise ValueError(f"{name} must be symmetric")


class CorrelationMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rho: np.ndarray
    kernel: Kernel
    kept_neurons: np.ndarray
    layer_of: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def check_matrix(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        rho = np.array(data.get("rho"), dtype=np.float64)
        layer_of = np.array(data.get("layer_of"), dtype=np.int64).reshape(-1)
        _check_square(rho, layer_of, "correlation matrix")
        if np.any(np.abs(rho) > 1.0) or np.any(np.diag(rho) != 1.0):
            raise ValueError("correlation entries must lie in [-1, 1] with unit diagonal")
        kept = data.get("kept_neurons")
        kept = np.arange(rho.shape[0], dtype=np.int64) if kept is None else np.array(kept, dtype=np.int64).reshape(-1)
        if kept.shape[0] != rho.shape[0]:
            raise ValueError("kept_neurons must have one entry per row")
        data["rho"] = _readonly(rho)
        data["layer_of"] = _readonly(layer_of)
        data["kept_neurons"] = _readonly(kept)
        return data

    @property
    def size(self) -> int:
        return self.rho.shape[0]


class DissimilarityMatrix(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w: np.ndarray
    layer_of: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def check_matrix(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        w = np.array(data.get("w"), dtype=np.float64)
        layer_of = data.get("layer_of")
        layer_of = np.zeros(w.shape[0], dtype=np.int64) if layer_of is None else np.array(layer_of, dtype=np.int64).reshape(-1)
        _check_square(w, layer_of, "dissimilarity matrix")
        if np.any(w < 0.0) or np.any(w > 2.0) or np.any(np.diag(w) != 0.0):
            raise ValueError("dissimilarities must lie in [0, 2] with zero diagonal")
        data["w"] = _readonly(w)
        data["layer_of"] = _readonly(layer_of)
        return data

    @property
    def size(self) -> int:
        return self.w.shape[0]


def record_activations(net: NetworkSpec, X) -> ActivationTrace:
    activations, _ = eval_batch(net, X)
    if activations.shape[0] < 2:
        raise DegenerateDataError(f"recording activations needs at least 2 inputs, got {activations.shape[0]}")
    return ActivationTrace(values=activations, layer_of=net.layer_of)


def _second_moments(values: np.ndarray, kernel: Kernel) -> Tuple[np.ndarray, np.ndarray]:
    """(1/n)-normalized second-moment matrix, centered for pearson.

    Means use the corrected two-pass form: the residual sum of the centered data
    is folded back into the mean before the products are formed. Products are
    accumulated over row blocks of MOMENT_CHUNK with a Kahan carry between blocks,
    so the rounding error of each entry stays near (MOMENT_CHUNK + 2) * eps times
    sum_t |x_ti x_tj| instead of growing with n.
    """
    n, m = values.shape
    mean = np.zeros(m)
    if kernel == Kernel.PEARSON:
        mean = values.sum(axis=0) / n
        mean += (values - mean).sum(axis=0) / n
    total = np.zeros((m, m))
    carry = np.zeros((m, m))
    for start in range(0, n, MOMENT_CHUNK):
        block = values[start : start + MOMENT_CHUNK] - mean
        term = block.T @ block - carry
        updated = total + term
        carry = (updated - total) - term
        total = updated
    return total / n, mean


def _normalize(S: np.ndarray) -> np.ndarray:
    scale = np.sqrt(np.diag(S))
    rho = S / np.outer(scale, scale)
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return rho


def correlation_matrix(trace: ActivationTrace, kernel: Kernel = Kernel.PEARSON) -> CorrelationMatrix:
    kernel = Kernel(kernel)
    values = trace.values
    n = values.shape[0]
    if kernel == Kernel.COSINE:
        spread = np.einsum("ij,ij->j", values, values) / n
    else:
        spread = values.var(axis=0)
    kept = np.flatnonzero(spread >= DEGENERATE_TOL)
    if kept.size < 2:
        raise DegenerateDataError(
            f"only {kept.size} of {trace.n_neurons} neurons have non-degenerate activations under the {kernel.value} kernel"
        )
    if kept.size < trace.n_neurons:
        logger.info("dropped %d degenerate neurons", trace.n_neurons - kept.size)

    S, _ = _second_moments(values[:, kept], kernel)
    return CorrelationMatrix(
        rho=_normalize(S),
        kernel=kernel,
        kept_neurons=trace.neuron_ids[kept],
        layer_of=trace.layer_of[kept],
    )


def dissimilarity(M: CorrelationMatrix) -> DissimilarityMatrix:
    w = np.clip(1.0 - M.rho, 0.0, 2.0)
    np.fill_diagonal(w, 0.0)
    return DissimilarityMatrix(w=w, layer_of=M.layer_of)


# Closed-form second moments of the theorem networks under D2, neurons ordered p1..p4, q1..q4.
_F1_BLOCK = np.array(
    [
        [0.5, 0.0, 0.5, 0.0],
        [0.0, 0.5, 0.0, 0.5],
        [0.5, 0.0, 0.5, 0.0],
        [0.0, 0.5, 0.0, 0.5],
    ]
)
_F2_PP = np.array(
    [
        [0.5, 0.0, 0.25, 0.25],
        [0.0, 0.5, 0.25, 0.25],
        [0.25, 0.25, 0.5, 0.0],
        [0.25, 0.25, 0.0, 0.5],
    ]
)
_F2_QQ = np.eye(4) / 4.0
_F2_PQ = np.array(
    [
        [0.25, 0.25, 0.0, 0.0],
        [0.0, 0.0, 0.25, 0.25],
        [0.25, 0.0, 0.25, 0.0],
        [0.0, 0.25, 0.0, 0.25],
    ]
)


def theorem_moments() -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """((S1, mean1), (S2, mean2)): second-moment matrices and neuron means of f1 and f2 under D2."""
    S1 = np.block([[_F1_BLOCK, _F1_BLOCK], [_F1_BLOCK, _F1_BLOCK]])
    mean1 = np.full(8, 0.5)
    S2 = np.block([[_F2_PP, _F2_PQ], [_F2_PQ.T, _F2_QQ]])
    mean2 = np.concatenate([np.full(4, 0.5), np.full(4, 0.25)])
    return (S1, mean1), (S2, mean2)


def analytic_theorem_matrices(kernel: Kernel = Kernel.COSINE) -> Tuple[CorrelationMatrix, CorrelationMatrix]:
    kernel = Kernel(kernel)
    layer_of = np.repeat(np.arange(2, dtype=np.int64), 4)
    matrices = []
    for S, mean in theorem_moments():
        if kernel == Kernel.PEARSON:
            S = S - np.outer(mean, mean)
        matrices.append(CorrelationMatrix(rho=_normalize(S), kernel=kernel, layer_of=layer_of))
    return matrices[0], matrices[1]
