"""Sparse adjacency container and the normalized operators built from it."""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..errors import ShapeMismatch


class SparseAdj:
    """Weighted |V| x |V| adjacency in CSR form (row = source, column = target)."""

    def __init__(self, matrix, symmetric: bool | None = None):
        m = sp.csr_matrix(matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ShapeMismatch(f"adjacency must be square, got {m.shape}")
        if (m.data < 0).any():
            raise ValueError("adjacency weights must be >= 0")
        m.sum_duplicates()
        m.sort_indices()
        self.csr = m
        if symmetric is None:
            symmetric = (abs(m - m.T) > 1e-12).nnz == 0
        self.symmetric = bool(symmetric)

    @classmethod
    def from_edges(cls, src, dst, weight, n: int) -> "SparseAdj":
        return cls(sp.csr_matrix((np.asarray(weight, dtype=np.float64), (src, dst)), shape=(n, n)))

    @classmethod
    def from_snapshot(cls, snapshot, normalize: bool = True) -> "SparseAdj":
        """Directed confidence-weighted adjacency; weights scaled by the snapshot maximum."""
        w = np.asarray(snapshot.confidence, dtype=np.float64)
        if normalize and len(w):
            top = w.max()
            w = w / top if top > 0 else np.ones_like(w)
        return cls.from_edges(snapshot.src, snapshot.dst, w, snapshot.n_genes)

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @cached_property
    def symmetrized(self) -> "SparseAdj":
        """``max(A, A^T)``."""
        if self.symmetric:
            return self
        return SparseAdj(self.csr.maximum(self.csr.T), symmetric=True)

    @cached_property
    def gcn_operator(self) -> sp.csr_matrix:
        """``D^-1/2 (A_sym + I) D^-1/2``."""
        a = self.symmetrized.csr + sp.identity(self.n, format="csr")
        deg = np.asarray(a.sum(axis=1)).ravel()
        dinv = sp.diags(1.0 / np.sqrt(deg))
        return (dinv @ a @ dinv).tocsr()

    @cached_property
    def cheb_operator(self) -> sp.csr_matrix:
        """Scaled Laplacian ``2L/lambda_max - I`` with lambda_max = 2, i.e. ``-D^-1/2 A D^-1/2``.

        Uses this adjacency as given; callers symmetrize first.
        """
        a = self.csr
        deg = np.asarray(a.sum(axis=1)).ravel()
        dinv = np.zeros_like(deg)
        dinv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
        d = sp.diags(dinv)
        return (-(d @ a @ d)).tocsr()

    @cached_property
    def in_edges_with_self_loops(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) arrays of all edges plus one self-loop per node, grouped by dst."""
        coo = self.csr.tocoo()
        keep = coo.row != coo.col
        src = np.concatenate([coo.row[keep], np.arange(self.n)])
        dst = np.concatenate([coo.col[keep], np.arange(self.n)])
        order = np.lexsort((src, dst))
        return src[order].astype(np.int64), dst[order].astype(np.int64)
