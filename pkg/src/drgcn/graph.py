"""Graph storage, symmetric normalization, and sparse-dense propagation.

Edges are undirected: input pairs are symmetrized and deduplicated on build,
and one self-loop per node is added before normalization. The normalized
operator keeps no gradient through its values; it is a constant of training.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .autodiff import Rng, ShapeError, Tensor, _record

__all__ = ["Graph", "SparseAdj", "GraphError", "build_normalized", "spmm",
           "power_propagate", "smoothness_mad"]

MAD_SAMPLE_THRESHOLD = 2000  # full pairwise up to here, sampled above
MAD_SAMPLE_PAIRS = 200_000


class GraphError(ValueError):
    pass


class Graph:
    """Undirected graph as a deduplicated edge list plus degree counts."""

    def __init__(self, n: int, edges):
        if n < 1:
            raise GraphError(f"node count must be >= 1, got {n}")
        self.n = int(n)
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= self.n):
            raise GraphError("edge endpoint out of range")
        # canonical form: u < v, self edges dropped (a self-loop is added
        # exactly once per node during normalization regardless)
        arr = arr[arr[:, 0] != arr[:, 1]]
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        self.edges = np.unique(np.stack([lo, hi], axis=1), axis=0)
        deg = np.bincount(self.edges.ravel(), minlength=self.n)
        self.degrees = deg + 1  # includes the self-loop

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def neighbors_csr(self):
        """CSR of the self-looped adjacency structure (indices sorted)."""
        u = np.concatenate([self.edges[:, 0], self.edges[:, 1],
                            np.arange(self.n)])
        v = np.concatenate([self.edges[:, 1], self.edges[:, 0],
                            np.arange(self.n)])
        order = np.lexsort((v, u))
        u, v = u[order], v[order]
        row_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(u, minlength=self.n), out=row_ptr[1:])
        return row_ptr, v


class SparseAdj:
    """CSR of the symmetric-normalized self-looped adjacency.

    vals[(i, j)] = 1 / sqrt(deg_i * deg_j) with degrees counting the
    self-loop; structure and values are exactly symmetric by construction.
    """

    def __init__(self, n: int, row_ptr, col_idx, vals):
        self.n = int(n)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        self._csr = sp.csr_matrix((self.vals, self.col_idx, self.row_ptr),
                                  shape=(self.n, self.n))

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def matvec_dense(self, h: np.ndarray) -> np.ndarray:
        return np.asarray(self._csr @ h)


def build_normalized(graph: Graph) -> SparseAdj:
    """Normalized operator for propagation: self-loops, deduped, sorted."""
    row_ptr, col_idx = graph.neighbors_csr()
    deg = graph.degrees.astype(np.float64)
    rows = np.repeat(np.arange(graph.n), np.diff(row_ptr))
    vals = 1.0 / np.sqrt(deg[rows] * deg[col_idx])
    return SparseAdj(graph.n, row_ptr, col_idx, vals)


def spmm(p: SparseAdj, h: Tensor) -> Tensor:
    """Sparse-dense product; differentiable wrt the dense side only."""
    if h.rows != p.n:
        raise ShapeError(f"spmm expects {p.n} rows, got {h.rows}")
    out = Tensor(p.matvec_dense(h.data))

    def make_back(nids):
        (nh,) = nids

        def back(g, acc):
            acc(nh, p.matvec_dense(g))  # operator is symmetric
        return back

    return _record(out, (h,), make_back)


def power_propagate(p: SparseAdj, h0: Tensor, ell: int) -> Tensor:
    if ell < 0:
        raise ValueError("power must be >= 0")
    h = h0
    for _ in range(ell):
        h = spmm(p, h)
    return h


def smoothness_mad(h, rng: Rng | None = None) -> float:
    """Mean pairwise cosine distance of rows; the collapse diagnostic.

    Zero rows are excluded. Above MAD_SAMPLE_THRESHOLD rows the mean is taken
    over MAD_SAMPLE_PAIRS seeded random pairs instead of all pairs.
    """
    arr = h.data if isinstance(h, Tensor) else np.asarray(h, dtype=np.float64)
    if arr.shape[0] < 2:
        raise GraphError("need at least 2 rows")
    norms = np.linalg.norm(arr, axis=1)
    keep = norms > 0.0
    if not keep.any():
        raise GraphError("all rows are zero")
    unit = arr[keep] / norms[keep, None]
    m = unit.shape[0]
    if m < 2:
        raise GraphError("fewer than 2 nonzero rows")
    if m <= MAD_SAMPLE_THRESHOLD:
        gram = unit @ unit.T
        total = (gram.sum() - np.trace(gram)) / 2.0
        pairs = m * (m - 1) / 2.0
        return float(1.0 - total / pairs)
    rng = rng if rng is not None else Rng(0)
    i = rng.integers(0, m, MAD_SAMPLE_PAIRS)
    j = rng.integers(0, m - 1, MAD_SAMPLE_PAIRS)
    j = np.where(j >= i, j + 1, j)  # distinct pair without rejection
    cos = np.einsum("ij,ij->i", unit[i], unit[j])
    return float(1.0 - cos.mean())
