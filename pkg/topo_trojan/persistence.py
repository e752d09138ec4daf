"""Persistence diagrams, representative cycles and bottleneck distance over Z/2.

0D pairs come from a union-find pass over the edges. 1D pairs come from reducing
the coboundary matrix (anti-transposed boundary, edges as columns processed from
last to first) with clearing of the edges that already merged components.
Representative cycles are read off a second, pruned boundary reduction that only
holds the triangles known to kill a 1D class.
"""

import logging
import time
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .complex import Filtration, build_filtration
from .errors import DimensionMismatchError, NumericFailure, TopoTrojanError
from .trace import DissimilarityMatrix

logger = logging.getLogger(__name__)

CYCLE_SLACK = 1e-9


class Dot(NamedTuple):
    dim: int
    birth: float
    death: float
    birth_index: int = -1
    death_index: int = -1

    @property
    def persistence(self) -> float:
        return self.death - self.birth


class PersistenceDiagram(BaseModel):
    model_config = ConfigDict(frozen=True)

    dots: List[Dot] = []
    with_zero_persistence: bool = False

    @classmethod
    def from_points(cls, dim: int, points: Sequence[Tuple[float, float]]) -> "PersistenceDiagram":
        return cls(dots=[Dot(dim, float(b), float(d)) for b, d in points])

    def __len__(self) -> int:
        return len(self.dots)

    def __iter__(self) -> Iterator[Dot]:
        return iter(self.dots)

    def by_dim(self, dim: int) -> "PersistenceDiagram":
        return self.model_copy(update={"dots": [d for d in self.dots if d.dim == dim]})

    def finite(self) -> "PersistenceDiagram":
        return self.model_copy(update={"dots": [d for d in self.dots if np.isfinite(d.death)]})

    def essential(self) -> "PersistenceDiagram":
        return self.model_copy(update={"dots": [d for d in self.dots if not np.isfinite(d.death)]})

    def births(self) -> np.ndarray:
        return np.array([d.birth for d in self.dots], dtype=np.float64)

    def deaths(self) -> np.ndarray:
        return np.array([d.death for d in self.dots], dtype=np.float64)

    def persistence(self) -> np.ndarray:
        return self.deaths() - self.births()

    def points(self) -> np.ndarray:
        return np.column_stack([self.births(), self.deaths()]) if self.dots else np.empty((0, 2))

    def multiset(self) -> List[Tuple[int, float, float]]:
        return sorted((d.dim, d.birth, d.death) for d in self.dots)

    def __add__(self, other: "PersistenceDiagram") -> "PersistenceDiagram":
        return PersistenceDiagram(
            dots=self.dots + other.dots,
            with_zero_persistence=self.with_zero_persistence or other.with_zero_persistence,
        )


class ReducedMatrix(BaseModel):
    """Reduced boundary matrix: sparse sorted row lists per column, and the column owning each pivot row."""

    columns: List[List[int]]
    pivot_of: Dict[int, int]

    def pivot(self, col: int) -> Optional[int]:
        rows = self.columns[col]
        return rows[-1] if rows else None


class CycleEdge(NamedTuple):
    i: int
    j: int
    weight: float
    layer_i: int
    layer_j: int


class CycleRepresentative(BaseModel):
    model_config = ConfigDict(frozen=True)

    birth: float
    death: float
    edges: List[CycleEdge]

    @property
    def dot(self) -> Tuple[float, float]:
        return (self.birth, self.death)

    @property
    def persistence(self) -> float:
        return self.death - self.birth

    def vertex_degrees(self) -> Dict[int, int]:
        degrees: Dict[int, int] = {}
        for edge in self.edges:
            degrees[edge.i] = degrees.get(edge.i, 0) + 1
            degrees[edge.j] = degrees.get(edge.j, 0) + 1
        return degrees


class ReductionStats(BaseModel):
    cutoff: float
    num_simplices: int
    cobd_red_s: float
    bd_red_s: float
    nonzero: int
    full_nonzero: int


class BitTree:
    """Fixed-capacity bitset with a 64-ary summary tree.

    Level 0 holds the bits; a set bit at level k+1 marks a nonzero word at level k.
    ``flip_many`` toggles a batch of distinct indices, ``max_index`` walks down from
    the root and ``drain`` returns the set indices in ascending order and clears them.
    """

    def __init__(self, capacity: int):
        self.capacity = max(int(capacity), 1)
        self.levels: List[np.ndarray] = []
        size = self.capacity
        while True:
            words = (size + 63) // 64
            self.levels.append(np.zeros(words, dtype=np.uint64))
            if words == 1:
                break
            size = words

    def flip_many(self, indices: np.ndarray) -> None:
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        if idx.size == 0:
            return
        for level in self.levels:
            words = idx >> 6
            bits = np.left_shift(np.uint64(1), (idx & 63).astype(np.uint64))
            touched, start = np.unique(words, return_index=True)
            if level is self.levels[0]:
                level[touched] ^= np.bitwise_or.reduceat(bits, start)
                nonzero = level[touched] != 0
            else:
                set_bits = np.bitwise_or.reduceat(np.where(nonzero, bits, np.uint64(0)), start)
                clear_bits = np.bitwise_or.reduceat(np.where(nonzero, np.uint64(0), bits), start)
                level[touched] = (level[touched] & ~clear_bits) | set_bits
                nonzero = level[touched] != 0
            idx = touched

    def max_index(self) -> int:
        pos = 0
        for level in reversed(self.levels):
            word = int(level[pos])
            if word == 0:
                return -1
            pos = pos * 64 + word.bit_length() - 1
        return pos

    def drain(self) -> np.ndarray:
        base = self.levels[0]
        words = np.flatnonzero(base)
        if words.size == 0:
            return np.empty(0, dtype=np.int64)
        bits = np.unpackbits(base[words].astype("<u8").view(np.uint8).reshape(-1, 8), axis=1, bitorder="little")
        rows, cols = np.nonzero(bits)
        base[words] = 0
        for level in self.levels[1:]:
            level[:] = 0
        return words[rows] * 64 + cols


class UnionFind:
    """Disjoint sets with union by rank and path compression; each root remembers its oldest vertex."""

    def __init__(self, size: int):
        self.parents = list(range(size))
        self.rank = [0] * size
        self.oldest = list(range(size))

    def find(self, elem: int) -> int:
        root = elem
        while root != self.parents[root]:
            root = self.parents[root]
        while elem != root:
            self.parents[elem], elem = root, self.parents[elem]
        return root

    def union(self, a: int, b: int) -> Optional[int]:
        """Merge the sets of ``a`` and ``b``; return the vertex whose component dies, or None."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return None
        elder = min(self.oldest[ra], self.oldest[rb])
        younger = max(self.oldest[ra], self.oldest[rb])
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parents[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        self.oldest[ra] = elder
        return younger


def _zero_dim_pairs(F: Filtration) -> Tuple[List[Tuple[int, int]], List[int]]:
    """((dying vertex, edge ordinal) per merge, surviving oldest vertices)."""
    edges, _ = F.edges()
    uf = UnionFind(F.neuron_count)
    merges = []
    for ordinal, (a, b) in enumerate(edges.tolist()):
        dying = uf.union(a, b)
        if dying is not None:
            merges.append((dying, ordinal))
    survivors = sorted({uf.oldest[uf.find(v)] for v in range(F.neuron_count)})
    return merges, survivors


def zero_dim_diagram(F: Filtration, with_zero_persistence: bool = False) -> PersistenceDiagram:
    merges, survivors = _zero_dim_pairs(F)
    vertex_pos = np.empty(F.neuron_count, dtype=np.int64)
    vertex_pos[F.verts[F.positions(0), 0]] = F.positions(0)
    edge_pos = F.positions(1)
    dots = []
    for vertex, ordinal in merges:
        pos = int(edge_pos[ordinal])
        death = float(F.values[pos])
        birth = float(F.values[vertex_pos[vertex]])
        if death > birth or with_zero_persistence:
            dots.append(Dot(0, birth, death, int(vertex_pos[vertex]), pos))
    for vertex in survivors:
        dots.append(Dot(0, float(F.values[vertex_pos[vertex]]), float("inf"), int(vertex_pos[vertex]), -1))
    return PersistenceDiagram(dots=dots, with_zero_persistence=with_zero_persistence)


class _Coboundary(NamedTuple):
    pairs: List[Tuple[int, int]]
    essential: List[int]
    seconds: float


def _reduce_coboundary(F: Filtration, cleared: np.ndarray, tri_edges: np.ndarray) -> _Coboundary:
    """Pairs (edge ordinal, triangle ordinal) from the twisted coboundary reduction.

    Rows are keyed ``n_tri - 1 - triangle``, so the pivot is the earliest coface.
    """
    start_time = time.perf_counter()
    n_edges = int(cleared.shape[0])
    n_tri = tri_edges.shape[0]
    faces = tri_edges.ravel()
    cofaces_of = np.repeat(np.arange(n_tri, dtype=np.int64), 3)
    order = np.lexsort((cofaces_of, faces))
    cofaces = cofaces_of[order]
    indptr = np.zeros(n_edges + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(np.bincount(faces, minlength=n_edges))

    tree = BitTree(n_tri)
    owner: Dict[int, int] = {}
    reduced: Dict[int, np.ndarray] = {}
    pairs: List[Tuple[int, int]] = []
    essential: List[int] = []

    def column(edge: int) -> np.ndarray:
        col = reduced.get(edge)
        if col is None:
            col = n_tri - 1 - cofaces[indptr[edge] : indptr[edge + 1]]
        return col

    for edge in range(n_edges - 1, -1, -1):
        if cleared[edge]:
            continue
        lo, hi = indptr[edge], indptr[edge + 1]
        if lo == hi:
            essential.append(edge)
            continue
        first = int(cofaces[lo])
        if first not in owner:
            owner[first] = edge
            pairs.append((edge, first))
            continue
        tree.flip_many(column(edge))
        while True:
            key = tree.max_index()
            if key < 0:
                essential.append(edge)
                break
            tri = n_tri - 1 - key
            other = owner.get(tri)
            if other is None:
                owner[tri] = edge
                reduced[edge] = tree.drain()
                pairs.append((edge, tri))
                break
            tree.flip_many(column(other))

    return _Coboundary(pairs, essential, time.perf_counter() - start_time)


def _cleared_edges(F: Filtration) -> np.ndarray:
    merges, _ = _zero_dim_pairs(F)
    cleared = np.zeros(F.positions(1).shape[0], dtype=bool)
    cleared[[ordinal for _, ordinal in merges]] = True
    return cleared


def _one_dim_dots(F: Filtration, result: _Coboundary, with_zero_persistence: bool) -> List[Dot]:
    edge_pos = F.positions(1)
    tri_pos = F.positions(2)
    dots = []
    for edge, tri in result.pairs:
        bpos, dpos = int(edge_pos[edge]), int(tri_pos[tri])
        birth, death = float(F.values[bpos]), float(F.values[dpos])
        if death > birth or with_zero_persistence:
            dots.append(Dot(1, birth, death, bpos, dpos))
    for edge in result.essential:
        bpos = int(edge_pos[edge])
        dots.append(Dot(1, float(F.values[bpos]), float("inf"), bpos, -1))
    dots.sort(key=lambda d: (d.birth_index, d.death_index))
    return dots


def one_dim_diagram(F: Filtration, with_zero_persistence: bool = False) -> PersistenceDiagram:
    result = _reduce_coboundary(F, _cleared_edges(F), F.triangle_edges())
    return PersistenceDiagram(
        dots=_one_dim_dots(F, result, with_zero_persistence),
        with_zero_persistence=with_zero_persistence,
    )


def compute_diagrams(F: Filtration, with_zero_persistence: bool = False) -> Tuple[PersistenceDiagram, PersistenceDiagram]:
    return zero_dim_diagram(F, with_zero_persistence), one_dim_diagram(F, with_zero_persistence)


def boundary_reduce(F: Filtration) -> ReducedMatrix:
    """Textbook left-to-right reduction of the full boundary matrix."""
    index_of = {}
    columns: List[List[int]] = []
    pivot_of: Dict[int, int] = {}
    for pos, simplex in enumerate(F):
        index_of[simplex.vertices] = pos
        verts = simplex.vertices
        col = set()
        if len(verts) > 1:
            col = {index_of[verts[:k] + verts[k + 1 :]] for k in range(len(verts))}
        while col:
            low = max(col)
            if low not in pivot_of:
                pivot_of[low] = pos
                break
            col ^= set(columns[pivot_of[low]])
        columns.append(sorted(col))
    return ReducedMatrix(columns=columns, pivot_of=pivot_of)


def naive_reduce(F: Filtration, with_zero_persistence: bool = False) -> PersistenceDiagram:
    reduced = boundary_reduce(F)
    dots = []
    for pos in range(len(F)):
        dim = int(F.dims[pos])
        if dim > 1:
            continue
        killer = reduced.pivot_of.get(pos)
        if killer is not None:
            birth, death = float(F.values[pos]), float(F.values[killer])
            if death > birth or with_zero_persistence:
                dots.append(Dot(dim, birth, death, pos, killer))
        elif not reduced.columns[pos]:
            dots.append(Dot(dim, float(F.values[pos]), float("inf"), pos, -1))
    return PersistenceDiagram(dots=dots, with_zero_persistence=with_zero_persistence)


def _select_pairs(
    F: Filtration,
    pairs: List[Tuple[int, int]],
    top_k: Optional[int],
    death_cutoff: Optional[float],
) -> List[Tuple[int, int]]:
    edge_values = F.values[F.positions(1)]
    tri_values = F.values[F.positions(2)]
    live = [(e, t) for e, t in pairs if tri_values[t] > edge_values[e]]
    live.sort(key=lambda p: (-(tri_values[p[1]] - edge_values[p[0]]), p[1]))
    if death_cutoff is not None:
        return [p for p in live if tri_values[p[1]] <= death_cutoff]
    if top_k is not None:
        return live[:top_k]
    return live


def extract_cycles_with_stats(
    F: Filtration,
    top_k: Optional[int] = None,
    death_cutoff: Optional[float] = None,
    slack: float = CYCLE_SLACK,
) -> Tuple[List[CycleRepresentative], ReductionStats]:
    if top_k is not None and death_cutoff is not None:
        raise TopoTrojanError("select cycles by top_k or by death_cutoff, not both")
    if top_k is not None and top_k < 0:
        raise TopoTrojanError(f"top_k must be non-negative, got {top_k}")

    tri_edges = F.triangle_edges()
    cohomology = _reduce_coboundary(F, _cleared_edges(F), tri_edges)
    edge_values = F.values[F.positions(1)]
    tri_values = F.values[F.positions(2)]
    full_nonzero = 3 * tri_edges.shape[0]

    deaths = [tri_values[t] for e, t in cohomology.pairs if tri_values[t] > edge_values[e]]
    if not deaths:
        stats = ReductionStats(
            cutoff=0.0,
            num_simplices=0,
            cobd_red_s=cohomology.seconds,
            bd_red_s=0.0,
            nonzero=0,
            full_nonzero=full_nonzero,
        )
        return [], stats
    cutoff = float(max(deaths)) + slack

    # Only triangles that kill a class can own a pivot, so the others never enter the reduction.
    negative = np.zeros(tri_edges.shape[0], dtype=bool)
    negative[[t for _, t in cohomology.pairs]] = True
    pruned = np.flatnonzero(negative & (tri_values <= cutoff))

    start_time = time.perf_counter()
    tree = BitTree(edge_values.shape[0])
    owner: Dict[int, int] = {}
    reduced: Dict[int, np.ndarray] = {}
    for tri in pruned.tolist():
        boundary = np.sort(tri_edges[tri])
        low = int(boundary[-1])
        if low not in owner:
            owner[low] = tri
            reduced[tri] = boundary
            continue
        tree.flip_many(boundary)
        while True:
            low = tree.max_index()
            if low < 0:
                raise NumericFailure(f"triangle {tri} paired in cohomology reduced to zero in the boundary matrix")
            other = owner.get(low)
            if other is None:
                owner[low] = tri
                reduced[tri] = tree.drain()
                break
            tree.flip_many(reduced[other])
    bd_seconds = time.perf_counter() - start_time

    stats = ReductionStats(
        cutoff=cutoff,
        num_simplices=int(np.count_nonzero(F.values <= cutoff)),
        cobd_red_s=cohomology.seconds,
        bd_red_s=bd_seconds,
        nonzero=3 * int(pruned.size),
        full_nonzero=full_nonzero,
    )

    edges, weights = F.edges()
    cycles = []
    for edge, tri in _select_pairs(F, cohomology.pairs, top_k, death_cutoff):
        col = reduced[tri]
        if int(col[-1]) != edge:
            raise NumericFailure(f"cycle of triangle {tri} ends at edge {int(col[-1])}, expected {edge}")
        cycle_edges = [
            CycleEdge(int(a), int(b), float(weights[k]), int(F.layer_of[a]), int(F.layer_of[b]))
            for k, (a, b) in zip(col.tolist(), edges[col].tolist())
        ]
        cycles.append(CycleRepresentative(birth=float(edge_values[edge]), death=float(tri_values[tri]), edges=cycle_edges))
    logger.debug("extracted %d cycles from %d pruned triangles", len(cycles), pruned.size)
    return cycles, stats


def extract_cycles(
    F: Filtration,
    top_k: Optional[int] = None,
    death_cutoff: Optional[float] = None,
) -> List[CycleRepresentative]:
    cycles, _ = extract_cycles_with_stats(F, top_k=top_k, death_cutoff=death_cutoff)
    return cycles


def _matching_feasible(cost: np.ndarray, half_a: np.ndarray, half_b: np.ndarray, radius: float) -> bool:
    n, m = cost.shape
    adjacency = np.zeros((n + m, m + n), dtype=bool)
    adjacency[:n, :m] = cost <= radius
    adjacency[np.arange(n), m + np.arange(n)] = half_a <= radius
    adjacency[n + np.arange(m), np.arange(m)] = half_b <= radius
    adjacency[n:, m:] = True
    matching = maximum_bipartite_matching(csr_matrix(adjacency.astype(np.int8)), perm_type="column")
    return bool(np.all(matching >= 0))


def _finite_bottleneck(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape[0] == 0 and b.shape[0] == 0:
        return 0.0
    cost = np.maximum(np.abs(a[:, None, 0] - b[None, :, 0]), np.abs(a[:, None, 1] - b[None, :, 1]))
    half_a = (a[:, 1] - a[:, 0]) / 2.0
    half_b = (b[:, 1] - b[:, 0]) / 2.0
    candidates = np.unique(np.concatenate([[0.0], cost.ravel(), half_a, half_b]))
    lo, hi = 0, candidates.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _matching_feasible(cost, half_a, half_b, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def bottleneck_distance(A: PersistenceDiagram, B: PersistenceDiagram, dim: int) -> float:
    A, B = A.by_dim(dim), B.by_dim(dim)
    inf_a = np.sort(A.essential().births())
    inf_b = np.sort(B.essential().births())
    if inf_a.size != inf_b.size:
        return float("inf")
    essential_part = float(np.max(np.abs(inf_a - inf_b))) if inf_a.size else 0.0
    return max(essential_part, _finite_bottleneck(A.finite().points(), B.finite().points()))


def diagram_stability_check(W1: DissimilarityMatrix, W2: DissimilarityMatrix, cutoff: float = 2.0) -> Tuple[float, float]:
    """Both sides of d_b(Dg1(W1), Dg1(W2)) <= max |W1 - W2|."""
    if W1.size != W2.size:
        raise DimensionMismatchError(W1.size, W2.size, what="dissimilarity matrix")
    dg1 = one_dim_diagram(build_filtration(W1, cutoff))
    dg2 = one_dim_diagram(build_filtration(W2, cutoff))
    return bottleneck_distance(dg1, dg2, 1), float(np.max(np.abs(W1.w - W2.w)))
