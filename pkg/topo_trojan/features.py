from typing import Any, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DegenerateDataError
from .netlab import RandomSource
from .persistence import PersistenceDiagram
from .trace import CorrelationMatrix

FEATURE_VERSION = 1

_STATISTICS = [
    "max_persistence",
    "mean_persistence",
    "mean_birth",
    "mean_death",
    "mean_midlife",
    "std_persistence",
]
FEATURE_NAMES = [f"f{dim}{k + 1}" for dim in (0, 1) for k in range(len(_STATISTICS))]
FEATURE_DESCRIPTIONS = {
    name: f"dim{dim} {stat}" for name, (dim, stat) in zip(FEATURE_NAMES, [(d, s) for d in (0, 1) for s in _STATISTICS])
}
CORR_NAMES = ["s1", "s2", "s3", "s4", "s5", "fr25", "fr50", "fr75"]
CORR_PERCENTILES = (25.0, 50.0, 75.0)

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


class FeatureVector(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    names: List[str] = FEATURE_NAMES
    model_label: Optional[int] = None

    @model_validator(mode="before")
    @classmethod
    def check_values(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            values = np.array(data.get("values"), dtype=np.float64).reshape(-1)
            names = data.get("names", FEATURE_NAMES)
            if values.shape[0] != len(names):
                raise ValueError(f"{values.shape[0]} feature values for {len(names)} names")
            if not np.all(np.isfinite(values)):
                raise ValueError("feature values must be finite")
            if data.get("model_label") not in (None, 0, 1):
                raise ValueError(f"model label must be 0 or 1, got {data['model_label']}")
            values.setflags(write=False)
            data["values"] = values
        return data

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_label(self, label: Optional[int]) -> "FeatureVector":
        return self.model_copy(update={"model_label": label})


class CorrBaselineVector(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    singular: np.ndarray
    frob: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([self.singular, self.frob])

    def as_features(self, model_label: Optional[int] = None) -> FeatureVector:
        return FeatureVector(values=self.values, names=CORR_NAMES, model_label=model_label)


def _dimension_statistics(dg: PersistenceDiagram) -> List[float]:
    live = [d for d in dg.finite() if d.death > d.birth]
    if not live:
        return [0.0] * len(_STATISTICS)
    births = np.array([d.birth for d in live])
    deaths = np.array([d.death for d in live])
    persistence = deaths - births
    return [
        float(persistence.max()),
        float(persistence.mean()),
        float(births.mean()),
        float(deaths.mean()),
        float(((births + deaths) / 2.0).mean()),
        float(persistence.std()),
    ]


def topo_features(dg0: PersistenceDiagram, dg1: PersistenceDiagram, model_label: Optional[int] = None) -> FeatureVector:
    values = _dimension_statistics(dg0.by_dim(0)) + _dimension_statistics(dg1.by_dim(1))
    return FeatureVector(values=values, model_label=model_label)


def top_singular_values(A: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Leading ``k`` singular values by power iteration on A^T A, deflating A after each one."""
    A = np.array(A, dtype=np.float64)
    rng = RandomSource(seed).generator
    values = np.zeros(k)
    for r in range(k):
        B = A.T @ A
        x = rng.standard_normal(A.shape[1])
        x /= np.linalg.norm(x)
        for _ in range(POWER_MAX_ITER):
            y = B @ x
            norm = np.linalg.norm(y)
            if norm < 1e-300:
                x = None
                break
            y /= norm
            if np.linalg.norm(y - x) < POWER_TOL:
                x = y
                break
            x = y
        if x is None:
            break
        Av = A @ x
        sigma = float(np.linalg.norm(Av))
        if sigma < 1e-300:
            break
        values[r] = sigma
        A = A - np.outer(Av, x)
    return values


def corr_baseline_features(M: CorrelationMatrix, seed: int = 0) -> CorrBaselineVector:
    m = M.size
    if m < 5:
        raise DegenerateDataError(f"the correlation baseline needs at least 5 neurons, got {m}")
    rho = M.rho
    singular = top_singular_values(rho, 5, seed=seed)
    off_diagonal = np.abs(rho[~np.eye(m, dtype=bool)])
    thresholds = np.percentile(off_diagonal, CORR_PERCENTILES)
    frob = np.array([np.linalg.norm(np.where(np.abs(rho) < q, 0.0, rho)) for q in thresholds])
    return CorrBaselineVector(singular=singular, frob=frob)
