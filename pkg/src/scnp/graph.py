"""Undirected weighted graphs and normalized-adjacency algebra."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ShapeMismatch, ZeroDegree

log = logging.getLogger(__name__)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    Edges are stored once each, canonically with ``src < dst``.  Use
    :meth:`from_edges` to build one from raw (possibly directed, duplicated)
    input; the plain constructor validates but does not clean.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        w = np.asarray(self.weight, dtype=np.float64)
        if not (src.shape == dst.shape == w.shape) or src.ndim != 1:
            raise ShapeMismatch("src, dst and weight must be 1-d arrays of equal length")
        if self.n < 0:
            raise ValueError("node count must be nonnegative")
        if src.size:
            if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= self.n:
                raise ValueError("edge endpoint outside [0, n)")
            if np.any(src == dst):
                raise ValueError("self-loops are not stored in the raw edge list")
            if np.any(src > dst):
                raise ValueError("edges must be canonical (src < dst); use Graph.from_edges")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("edge weights must be finite and strictly positive")
            key = src * self.n + dst
            if np.unique(key).size != key.size:
                raise ValueError("duplicate edges; use Graph.from_edges")
        object.__setattr__(self, "src", _frozen(src))
        object.__setattr__(self, "dst", _frozen(dst))
        object.__setattr__(self, "weight", _frozen(w))

    @property
    def m(self) -> int:
        return int(self.src.size)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build a graph from ``(u, v)`` or ``(u, v, weight)`` tuples.

        Repeats of the same ordered pair are summed (with a warning).  The two
        directions of a pair are then merged by taking the max.  Self-loops
        are dropped, since :func:`add_self_loops` adds unit loops itself.
        """
        edges = list(edges)
        if not edges:
            z = np.zeros(0)
            return cls(n, z.astype(np.int64), z.astype(np.int64), z)
        u = np.array([e[0] for e in edges], dtype=np.int64)
        v = np.array([e[1] for e in edges], dtype=np.int64)
        w = np.array([e[2] if len(e) > 2 else 1.0 for e in edges], dtype=np.float64)
        if u.min() < 0 or v.min() < 0 or max(u.max(), v.max()) >= n:
            raise ValueError("edge endpoint outside [0, n)")
        loops = u == v
        if loops.any():
            log.warning("dropping %d self-loop(s) from input", int(loops.sum()))
            u, v, w = u[~loops], v[~loops], w[~loops]

        # sum repeats of each ordered pair
        directed = sp.coo_matrix((w, (u, v)), shape=(n, n)).tocsr()
        directed.sum_duplicates()
        ndup = u.size - directed.nnz
        if ndup:
            log.warning("collapsed %d duplicate edge(s) by summing weights", ndup)
        sym = directed.maximum(directed.T).tocoo()
        keep = sym.row < sym.col
        order = np.lexsort((sym.col[keep], sym.row[keep]))
        return cls(n, sym.row[keep][order], sym.col[keep][order], sym.data[keep][order])

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric weighted adjacency matrix ``A`` (no self-loops)."""
        rows = np.concatenate([self.src, self.dst])
        cols = np.concatenate([self.dst, self.src])
        vals = np.concatenate([self.weight, self.weight])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))


def add_self_loops(g: Graph) -> sp.csr_matrix:
    """Return ``A + I``."""
    return (g.adjacency() + sp.identity(g.n, format="csr")).tocsr()


def normalize_symmetric(a_tilde) -> sp.csr_matrix:
    """Return ``D^{-1/2} A D^{-1/2}`` where ``D`` holds the row sums of ``a_tilde``."""
    a = sp.csr_matrix(a_tilde, dtype=np.float64)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {a.shape}")
    deg = np.asarray(a.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise ZeroDegree(f"{int(np.sum(deg <= 0))} row(s) with nonpositive degree")
    coo = a.tocoo()
    # elementwise a_ij / sqrt(d_i d_j) keeps the result exactly symmetric
    vals = coo.data / np.sqrt(deg[coo.row] * deg[coo.col])
    out = sp.csr_matrix((vals, (coo.row, coo.col)), shape=a.shape)
    out.sort_indices()
    return out


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    return normalize_symmetric(add_self_loops(g))
