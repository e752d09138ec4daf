import logging
from typing import Dict, List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import betainc

from .complex import Filtration
from .errors import DegenerateDataError, DimensionMismatchError
from .features import FeatureVector
from .persistence import CycleRepresentative, PersistenceDiagram

logger = logging.getLogger(__name__)

VARIANCE_TOL = 1e-300


class TTestResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_stat: float
    dof: float = Field(gt=0)
    p_value: float = Field(ge=0.0, le=1.0)
    mean_a: float
    mean_b: float

    @property
    def direction(self) -> str:
        if self.mean_a > self.mean_b:
            return "a>b"
        if self.mean_a < self.mean_b:
            return "a<b"
        return "a=b"


class ShortcutStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_death_edge_length: float = Field(ge=0.0)
    mean_longest_cycle_edge_length: float = Field(ge=0.0)
    death_edge_lengths: List[int] = []
    cycle_edge_lengths: List[int] = []


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided Welch test; the Student-t tail comes from the regularized incomplete beta."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DegenerateDataError(f"Welch test needs at least 2 values per sample, got {a.size} and {b.size}")
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a, var_b = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = var_a + var_b
    if se2 < VARIANCE_TOL:
        dof = float(a.size + b.size - 2)
        if mean_a == mean_b:
            return TTestResult(t_stat=0.0, dof=dof, p_value=1.0, mean_a=mean_a, mean_b=mean_b)
        t_stat = float(np.copysign(np.inf, mean_a - mean_b))
        return TTestResult(t_stat=t_stat, dof=dof, p_value=0.0, mean_a=mean_a, mean_b=mean_b)

    dof = float(se2**2 / (var_a**2 / (a.size - 1) + var_b**2 / (b.size - 1)))
    t_stat = float((mean_a - mean_b) / np.sqrt(se2))
    p_value = float(np.clip(betainc(dof / 2.0, 0.5, dof / (dof + t_stat**2)), 0.0, 1.0))
    return TTestResult(t_stat=t_stat, dof=dof, p_value=p_value, mean_a=mean_a, mean_b=mean_b)


def edge_length(i: int, j: int, layer_of) -> int:
    return abs(int(layer_of[j]) - int(layer_of[i]))


def death_edge_lengths(F: Filtration, dg0: PersistenceDiagram, top_k: int) -> List[int]:
    """Layer lengths of the edges that kill 0D classes, latest deaths first."""
    dying = [d for d in dg0.by_dim(0).finite() if d.death_index >= 0]
    dying.sort(key=lambda d: (-d.death, -d.death_index))
    lengths = []
    for dot in dying[: max(top_k, 0)]:
        i, j = F.verts[dot.death_index, :2]
        lengths.append(edge_length(int(i), int(j), F.layer_of))
    return lengths


def longest_cycle_edge_lengths(cycles: Sequence[CycleRepresentative], top_k: int) -> List[int]:
    ranked = sorted(cycles, key=lambda c: -c.persistence)
    return [max(abs(e.layer_j - e.layer_i) for e in cycle.edges) for cycle in ranked[: max(top_k, 0)] if cycle.edges]


def shortcut_stats(death_lengths: Sequence[Sequence[int]], cycle_lengths: Sequence[Sequence[int]]) -> ShortcutStats:
    """Pool per-model death-edge and longest-cycle-edge lengths of one population."""
    deaths = [int(x) for per_model in death_lengths for x in per_model]
    longest = [int(x) for per_model in cycle_lengths for x in per_model]
    return ShortcutStats(
        mean_death_edge_length=float(np.mean(deaths)) if deaths else 0.0,
        mean_longest_cycle_edge_length=float(np.mean(longest)) if longest else 0.0,
        death_edge_lengths=deaths,
        cycle_edge_lengths=longest,
    )


def compare_shortcuts(a: ShortcutStats, b: ShortcutStats) -> Dict[str, TTestResult]:
    """Welch tests between two populations on pooled death-edge and longest-cycle-edge lengths.

    A kind with fewer than 2 lengths on either side is left out of the report.
    """
    report = {}
    for name, xs, ys in (
        ("death_edge_length", a.death_edge_lengths, b.death_edge_lengths),
        ("longest_cycle_edge_length", a.cycle_edge_lengths, b.cycle_edge_lengths),
    ):
        if len(xs) < 2 or len(ys) < 2:
            logger.warning("no %s comparison: %d and %d lengths", name, len(xs), len(ys))
            continue
        report[name] = welch_t_test(xs, ys)
    return report


def population_report(features_a: Sequence[FeatureVector], features_b: Sequence[FeatureVector]) -> Dict[str, TTestResult]:
    if not features_a or not features_b:
        raise DegenerateDataError("both populations need feature vectors")
    names = features_a[0].names
    for fv in list(features_a) + list(features_b):
        if fv.names != names:
            raise DimensionMismatchError(len(names), len(fv.names), what="feature vector")
    A = np.stack([fv.values for fv in features_a])
    B = np.stack([fv.values for fv in features_b])
    report = {name: welch_t_test(A[:, k], B[:, k]) for k, name in enumerate(names)}
    logger.info(
        "population report: %d of %d features differ at p<0.05",
        sum(r.p_value < 0.05 for r in report.values()),
        len(report),
    )
    return report
