"""Back-ends of the theorem1, convergence and bench commands."""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from tqdm.auto import tqdm

from .complex import build_filtration
from .errors import NumericFailure, TopoTrojanError
from .netlab import RandomSource, build_bayes_f2, build_theorem_networks, empirical_risk, sample_gaussian_pair
from .persistence import PersistenceDiagram, bottleneck_distance, extract_cycles_with_stats, one_dim_diagram
from .schema import GaussianPairConfig, NetworkSpec
from .trace import (
    ActivationTrace,
    CorrelationMatrix,
    Kernel,
    analytic_theorem_matrices,
    correlation_matrix,
    dissimilarity,
    record_activations,
)

logger = logging.getLogger(__name__)

CLAIMED_GAP = 0.9
RISK_SLACK = 0.02
SLOPE_RANGE = (-0.75, -0.25)
MIN_SLOPE_POINTS = 4
BENCH_RATIO = 2.0


class KernelGap(BaseModel):
    model_config = ConfigDict(frozen=True)

    kernel: Kernel
    analytic_db: float
    sampled_db: Optional[float] = None
    max_persistence_f1: float
    max_persistence_f2: float

    @property
    def max_persistence_gap(self) -> float:
        return abs(self.max_persistence_f1 - self.max_persistence_f2)


class Theorem1Report(BaseModel):
    sigma: float
    eta: float
    sample_count: int
    seed: int
    gaps: List[KernelGap]
    risk_f1_d1: float
    risk_f2_d3: float
    risk_bayes_f2_d3: float
    risk_f2_d2: float

    @property
    def claim_holds(self) -> bool:
        return any(g.analytic_db >= CLAIMED_GAP for g in self.gaps)

    @property
    def risks_hold(self) -> bool:
        bound = self.eta + RISK_SLACK
        return self.risk_f1_d1 <= bound and self.risk_bayes_f2_d3 <= bound and 0.48 <= self.risk_f2_d2 <= 0.52

    @property
    def discrepancies(self) -> List[str]:
        notes = []
        if not self.claim_holds:
            best = max(g.analytic_db for g in self.gaps)
            notes.append(f"analytic bottleneck distance {best:.6f} is below the claimed {CLAIMED_GAP} under every kernel")
        if self.risk_f2_d3 > self.eta + RISK_SLACK:
            notes.append(
                f"f2 as written misclassifies D3 at rate {self.risk_f2_d3:.4f}; "
                f"the output-swapped f2 reaches {self.risk_bayes_f2_d3:.4f}"
            )
        return notes

    def as_dict(self) -> Dict:
        data = self.model_dump()
        data["gaps"] = [dict(g.model_dump(), max_persistence_gap=g.max_persistence_gap) for g in self.gaps]
        data.update(claim_holds=self.claim_holds, risks_hold=self.risks_hold, discrepancies=self.discrepancies)
        return data


def _max_persistence(dg: PersistenceDiagram) -> float:
    live = dg.finite().persistence()
    return float(live.max()) if live.size else 0.0


def _one_dim(M: CorrelationMatrix) -> PersistenceDiagram:
    return one_dim_diagram(build_filtration(dissimilarity(M), 2.0))


def _sampled_matrix(net: NetworkSpec, X: np.ndarray, kernel: Kernel) -> CorrelationMatrix:
    return correlation_matrix(record_activations(net, X), kernel)


def theorem1_report(
    sample_count: int = 50_000,
    sigma: float = 1.0,
    eta: float = 0.05,
    seed: int = 0,
    sampled: bool = True,
) -> Theorem1Report:
    """Analytic and sampled 1D bottleneck distances between f1 and f2 under D2, plus the risks.

    D1, D3 and D2 samples use seeds ``seed``, ``seed + 1`` and ``seed + 2``.
    """
    f1, f2 = build_theorem_networks()
    bayes_f2 = build_bayes_f2()
    source = RandomSource(seed)
    draw = {
        which: sample_gaussian_pair(
            GaussianPairConfig(sigma=sigma, eta=eta, which=which, sample_count=sample_count, seed=source.spawn(k).seed)
        )
        for k, which in enumerate(("D1", "D3", "D2"))
    }

    gaps = []
    for kernel in (Kernel.COSINE, Kernel.PEARSON):
        M1, M2 = analytic_theorem_matrices(kernel)
        dg1, dg2 = _one_dim(M1), _one_dim(M2)
        sampled_db = None
        if sampled:
            X = draw["D2"].X
            sampled_db = bottleneck_distance(
                _one_dim(_sampled_matrix(f1, X, kernel)), _one_dim(_sampled_matrix(f2, X, kernel)), 1
            )
        gaps.append(
            KernelGap(
                kernel=kernel,
                analytic_db=bottleneck_distance(dg1, dg2, 1),
                sampled_db=sampled_db,
                max_persistence_f1=_max_persistence(dg1),
                max_persistence_f2=_max_persistence(dg2),
            )
        )

    report = Theorem1Report(
        sigma=sigma,
        eta=eta,
        sample_count=sample_count,
        seed=seed,
        gaps=gaps,
        risk_f1_d1=empirical_risk(f1, draw["D1"]),
        risk_f2_d3=empirical_risk(f2, draw["D3"]),
        risk_bayes_f2_d3=empirical_risk(bayes_f2, draw["D3"]),
        risk_f2_d2=empirical_risk(f2, draw["D2"]),
    )
    for note in report.discrepancies:
        logger.warning("reproduction discrepancy: %s", note)
    return report


def required_sample_size(
    R: float = 1.0,
    r: float = 0.25,
    eps: float = 0.1,
    delta: float = 0.05,
    N: int = 1,
    m_star: int = 8,
) -> int:
    """Samples per class after which the sampled diagram is within ``eps`` with probability 1 - delta."""
    if min(R, r, eps) <= 0 or not 0 < delta < 1 or N < 1 or m_star < 1:
        raise TopoTrojanError("required sample size needs R, r, eps > 0, delta in (0, 1), N >= 1 and m_star >= 1")
    budget = 16.0 * R**6 * (math.log(N) + 2.0 * math.log(m_star) + math.log(1.0 / delta)) / (r**4 * eps**2)
    return int(math.ceil(budget))


class ConvergenceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    median_db: float
    db_per_seed: List[float]


class ConvergenceReport(BaseModel):
    kernel: Kernel
    rows: List[ConvergenceRow]
    slope: Optional[float]
    required_n: int

    @property
    def decreasing(self) -> bool:
        medians = [row.median_db for row in self.rows]
        return all(b < a for a, b in zip(medians, medians[1:]))

    def as_dict(self) -> Dict:
        return dict(self.model_dump(), decreasing=self.decreasing)


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.maximum(np.asarray(values, dtype=np.float64), 1e-300))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def convergence_table(
    n_grid: Sequence[int] = (400, 1600, 6400, 25600),
    seeds: int = 5,
    seed: int = 0,
    kernel: Kernel = Kernel.COSINE,
    sigma: float = 1.0,
    eta: float = 0.05,
    enable_progress: bool = True,
) -> ConvergenceReport:
    """d_b between f2's sampled and analytic 1D diagrams over a grid of sample sizes.

    Raises NumericFailure, with the report as payload, when the last median is not
    below the first or the log-log slope leaves the 1/sqrt(n) band.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 2 or any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 2:
        raise TopoTrojanError(f"the sample grid must hold at least two increasing sizes >= 2, got {n_grid}")
    if seeds < 1:
        raise TopoTrojanError(f"at least one seed is required, got {seeds}")
    kernel = Kernel(kernel)
    _, f2 = build_theorem_networks()
    reference = _one_dim(analytic_theorem_matrices(kernel)[1])
    source = RandomSource(seed)

    rows = []
    pbar = tqdm(total=len(n_grid) * seeds, desc="Convergence", unit="run", disable=not enable_progress)
    try:
        for k, n in enumerate(n_grid):
            values = []
            for s in range(seeds):
                cfg = GaussianPairConfig(sigma=sigma, eta=eta, which="D2", sample_count=n, seed=source.spawn(k * seeds + s).seed)
                X = sample_gaussian_pair(cfg).X
                values.append(bottleneck_distance(_one_dim(_sampled_matrix(f2, X, kernel)), reference, 1))
                pbar.update(1)
            rows.append(ConvergenceRow(n=n, median_db=float(np.median(values)), db_per_seed=values))
            logger.debug("n=%d median d_b %.6g", n, rows[-1].median_db)
    finally:
        pbar.close()

    slope = loglog_slope(n_grid, [row.median_db for row in rows]) if len(rows) >= 2 else None
    report = ConvergenceReport(kernel=kernel, rows=rows, slope=slope, required_n=required_sample_size())

    if rows[-1].median_db > rows[0].median_db:
        raise NumericFailure(
            f"median d_b grew from {rows[0].median_db:.6g} at n={rows[0].n} to {rows[-1].median_db:.6g} at n={rows[-1].n}",
            payload=report,
        )
    if len(rows) >= MIN_SLOPE_POINTS and not SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1]:
        raise NumericFailure(f"log-log slope {slope:.4f} outside {list(SLOPE_RANGE)}", payload=report)
    return report


class BenchRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: str
    neurons: int
    cutoff: float
    num_simplices: int
    cobd_red_s: float
    bd_red_s: float
    nonzero: int
    full_nonzero: int

    @property
    def within_ratio(self) -> bool:
        return self.bd_red_s <= BENCH_RATIO * self.cobd_red_s


def random_correlation_matrix(m: int, seed: int = 0, samples: Optional[int] = None) -> CorrelationMatrix:
    """Pearson matrix of ``m`` Gaussian neurons over ``samples`` (default 2m) draws."""
    rng = RandomSource(seed).generator
    n = samples if samples is not None else 2 * m
    values = rng.standard_normal((n, m))
    trace = ActivationTrace(values=values, layer_of=np.zeros(m, dtype=np.int64))
    return correlation_matrix(trace, Kernel.PEARSON)


def bench_table(matrices: Sequence[Tuple[str, CorrelationMatrix]], enable_progress: bool = True) -> List[BenchRow]:
    """Timings of the coboundary phase and the pruned boundary phase per matrix.

    The full filtration is reduced first; its largest finite 1D death sets the
    cutoff of the pruned phase.
    """
    rows = []
    for source, M in tqdm(matrices, desc="Bench", unit="matrix", disable=not enable_progress):
        F = build_filtration(dissimilarity(M), 2.0)
        _, stats = extract_cycles_with_stats(F)
        row = BenchRow(source=source, neurons=M.size, **stats.model_dump())
        if not row.within_ratio:
            logger.warning(
                "%s: pruned boundary reduction took %.3fs, more than %.0fx the coboundary reduction (%.3fs)",
                source,
                row.bd_red_s,
                BENCH_RATIO,
                row.cobd_red_s,
            )
        rows.append(row)
    return rows
