"""Undirected graphs, CSR adjacency, symmetric normalization, sparse matmul.

Everything downstream propagates node signals through the normalized
adjacency built here. All arrays are float64 and read-only after
construction, so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """An undirected simple graph on nodes 0..num_nodes-1.

    Input edges may appear in either orientation and with duplicates;
    they are stored canonically as unique (min, max) pairs. Self-loops
    are rejected: normalization adds its own.
    """

    num_nodes: int
    edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    def __post_init__(self):
        if self.num_nodes < 0:
            raise StructureError(f"num_nodes must be >= 0, got {self.num_nodes}")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.num_nodes:
                raise StructureError(
                    f"edge endpoint out of range [0, {self.num_nodes})"
                )
            if np.any(e[:, 0] == e[:, 1]):
                raise StructureError("self-loops are not allowed in stored edges")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        object.__setattr__(self, "edges", _frozen(e))

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        """Undirected degree per node (self-loops excluded)."""
        d = np.zeros(self.num_nodes, dtype=np.int64)
        if self.edges.size:
            np.add.at(d, self.edges[:, 0], 1)
            np.add.at(d, self.edges[:, 1], 1)
        return d


# below this many rows a cached dense copy of the matrix is used for
# multiplication; BLAS beats index-gathered CSR routing on small operands
DENSE_MATMUL_LIMIT = 3000


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix with float64 values."""

    num_rows: int
    num_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _dense_cache: np.ndarray | None = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        rp = _frozen(np.asarray(self.row_ptr, dtype=np.int64))
        ci = _frozen(np.asarray(self.col_idx, dtype=np.int64))
        vals = _frozen(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", vals)
        if rp.shape != (self.num_rows + 1,):
            raise StructureError("row_ptr must have length num_rows + 1")
        if rp[0] != 0 or rp[-1] != len(ci) or len(ci) != len(vals):
            raise StructureError("row_ptr endpoints inconsistent with entry count")
        if np.any(np.diff(rp) < 0):
            raise StructureError("row_ptr must be non-decreasing")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.num_cols:
                raise StructureError("column index out of range")
            # strictly increasing within each row: every adjacent pair that
            # does not straddle a row boundary must increase
            boundary = np.zeros(len(ci), dtype=bool)
            starts = rp[1:-1]
            boundary[starts[starts < len(ci)]] = True
            inner = ~boundary[1:]
            if np.any(ci[1:][inner] <= ci[:-1][inner]):
                raise StructureError("column indices must strictly increase within a row")

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.num_rows, self.num_cols))
        rows = np.repeat(np.arange(self.num_rows), np.diff(self.row_ptr))
        out[rows, self.col_idx] = self.values
        return out

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """``self @ dense``, routed through a cached dense operator when the
        matrix is small enough for BLAS to win. A concurrent first call may
        build the cache twice; both copies are identical."""
        if self.num_rows <= DENSE_MATMUL_LIMIT:
            if self._dense_cache is None:
                object.__setattr__(self, "_dense_cache", self.to_dense())
            dense = np.asarray(dense, dtype=np.float64)
            if dense.ndim != 2 or dense.shape[0] != self.num_cols:
                raise StructureError(
                    f"dimension mismatch: {self.num_rows}x{self.num_cols} @ {dense.shape}"
                )
            return self._dense_cache @ dense
        return spmm(self, dense)


def _csr_from_coo(num_rows: int, num_cols: int, rows: np.ndarray, cols: np.ndarray,
                  vals: np.ndarray) -> CsrMatrix:
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    row_ptr = np.zeros(num_rows + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return CsrMatrix(num_rows, num_cols, row_ptr, cols, vals)


def build_csr(graph: Graph) -> CsrMatrix:
    """Symmetric binary adjacency of ``graph`` in CSR form, no diagonal."""
    e = graph.edges
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    vals = np.ones(len(rows))
    return _csr_from_coo(graph.num_nodes, graph.num_nodes, rows, cols, vals)


def normalize_adjacency(graph: Graph) -> CsrMatrix:
    """Self-looped, symmetrically degree-normalized adjacency.

    Entry (i, j) is 1/sqrt(d_i * d_j) with d_i = degree_i + 1; the
    diagonal entry (i, i) is 1/d_i. Isolated nodes get d = 1, so no
    division by zero can occur.
    """
    n = graph.num_nodes
    d = graph.degrees() + 1.0
    inv_sqrt = 1.0 / np.sqrt(d)
    e = graph.edges
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    vals = inv_sqrt[rows] * inv_sqrt[cols]
    return _csr_from_coo(n, n, rows, cols, vals)


def spmm(m: CsrMatrix, dense: np.ndarray) -> np.ndarray:
    """Exact sparse-dense product ``m @ dense``."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != m.num_cols:
        raise StructureError(
            f"dimension mismatch: {m.num_rows}x{m.num_cols} @ {dense.shape}"
        )
    out = np.zeros((m.num_rows, dense.shape[1]))
    if m.nnz:
        products = m.values[:, None] * dense[m.col_idx]
        nonempty = np.diff(m.row_ptr) > 0
        # reduceat needs strictly increasing segment starts, so empty rows
        # are skipped and stay zero
        starts = m.row_ptr[:-1][nonempty]
        out[nonempty] = np.add.reduceat(products, starts, axis=0)
    return out
