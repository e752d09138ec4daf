import logging
from typing import Any, Iterator, List, NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import DegenerateDataError, TopoTrojanError
from .trace import DissimilarityMatrix

logger = logging.getLogger(__name__)


class Simplex(NamedTuple):
    vertices: Tuple[int, ...]
    filter_value: float

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1


class Filtration(BaseModel):
    """Vietoris-Rips filtration up to dimension 2, stored column-wise.

    Row k is the k-th simplex in filtration order: ``dims[k]`` is its dimension,
    ``verts[k]`` its sorted vertices padded with -1 and ``values[k]`` its filter value.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dims: np.ndarray
    verts: np.ndarray
    values: np.ndarray
    neuron_count: int
    cutoff: float
    layer_of: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def freeze_arrays(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            for key, dtype in (("dims", np.int8), ("verts", np.int64), ("values", np.float64), ("layer_of", np.int64)):
                arr = np.array(data.get(key), dtype=dtype)
                arr.setflags(write=False)
                data[key] = arr
            if data["verts"].ndim != 2 or data["verts"].shape[1] != 3:
                raise ValueError("verts must have shape (N, 3)")
            if not (data["dims"].shape[0] == data["verts"].shape[0] == data["values"].shape[0]):
                raise ValueError("dims, verts and values must have the same length")
        return data

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[Simplex]:
        for dim, verts, value in zip(self.dims.tolist(), self.verts.tolist(), self.values.tolist()):
            yield Simplex(tuple(verts[: dim + 1]), value)

    @property
    def simplices(self) -> List[Simplex]:
        return list(self)

    def positions(self, dim: int) -> np.ndarray:
        """Filtration positions of the simplices of dimension ``dim``, in order."""
        return np.flatnonzero(self.dims == dim)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        pos = self.positions(1)
        return self.verts[pos, :2], self.values[pos]

    def triangles(self) -> Tuple[np.ndarray, np.ndarray]:
        pos = self.positions(2)
        return self.verts[pos], self.values[pos]

    def edge_lookup(self) -> np.ndarray:
        """m x m array mapping a vertex pair to its edge ordinal, -1 when absent."""
        edges, _ = self.edges()
        lookup = np.full((self.neuron_count, self.neuron_count), -1, dtype=np.int64)
        ordinals = np.arange(edges.shape[0], dtype=np.int64)
        lookup[edges[:, 0], edges[:, 1]] = ordinals
        lookup[edges[:, 1], edges[:, 0]] = ordinals
        return lookup

    def triangle_edges(self) -> np.ndarray:
        """T x 3 edge ordinals of every triangle's faces (ab, ac, bc)."""
        tris, _ = self.triangles()
        lookup = self.edge_lookup()
        return np.stack(
            [lookup[tris[:, 0], tris[:, 1]], lookup[tris[:, 0], tris[:, 2]], lookup[tris[:, 1], tris[:, 2]]],
            axis=1,
        )


def _enumerate_triangles(w: np.ndarray, adjacency: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    m = w.shape[0]
    chunks = []
    values = []
    for i in range(m - 2):
        higher = np.flatnonzero(adjacency[i, i + 1 :]) + i + 1
        if higher.size < 2:
            continue
        sub = np.triu(adjacency[np.ix_(higher, higher)], k=1)
        a, b = np.nonzero(sub)
        if a.size == 0:
            continue
        j, k = higher[a], higher[b]
        chunks.append(np.stack([np.full(j.size, i), j, k], axis=1))
        values.append(np.maximum(np.maximum(w[i, j], w[i, k]), w[j, k]))
    if not chunks:
        return np.empty((0, 3), dtype=np.int64), np.empty(0)
    return np.concatenate(chunks).astype(np.int64), np.concatenate(values)


def build_filtration(W: DissimilarityMatrix, cutoff: float) -> Filtration:
    if not cutoff > 0:
        raise TopoTrojanError(f"cutoff must be positive, got {cutoff}")
    w = W.w
    m = W.size
    if m < 2:
        raise DegenerateDataError(f"a filtration needs at least 2 neurons, got {m}")

    adjacency = w <= cutoff
    np.fill_diagonal(adjacency, False)
    ei, ej = np.nonzero(np.triu(adjacency, k=1))
    tris, tri_values = _enumerate_triangles(w, adjacency)

    n_e, n_t = ei.size, tris.shape[0]
    verts = np.full((m + n_e + n_t, 3), -1, dtype=np.int64)
    verts[:m, 0] = np.arange(m)
    verts[m : m + n_e, 0] = ei
    verts[m : m + n_e, 1] = ej
    verts[m + n_e :] = tris
    dims = np.concatenate([np.zeros(m, np.int8), np.ones(n_e, np.int8), np.full(n_t, 2, np.int8)])
    values = np.concatenate([np.zeros(m), w[ei, ej], tri_values])

    order = np.lexsort((verts[:, 2], verts[:, 1], verts[:, 0], dims, values))
    logger.debug("filtration at cutoff %.6g: %d vertices, %d edges, %d triangles", cutoff, m, n_e, n_t)
    return Filtration(
        dims=dims[order],
        verts=verts[order],
        values=values[order],
        neuron_count=m,
        cutoff=float(cutoff),
        layer_of=W.layer_of,
    )


def simplex_counts(F: Filtration) -> Tuple[int, int, int]:
    counts = np.bincount(F.dims.astype(np.int64), minlength=3)
    return int(counts[0]), int(counts[1]), int(counts[2])
