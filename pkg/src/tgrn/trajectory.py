"""Diffusion pseudotime and equal-frequency binning of cells."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackError, eigsh
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import (
    DegenerateInput,
    DisconnectedRoot,
    EigSolverFailure,
    KTooLarge,
    RankDeficientWarning,
    TooFewCells,
)
from .ingest import ExpressionMatrix

log = logging.getLogger(__name__)

# dense eigensolver below this many cells, ARPACK above
DENSE_EIG_LIMIT = 3000


def normalize_log_center(expr) -> np.ndarray:
    """Cells x genes matrix: median library-size scaling, log1p, per-gene centering.

    Cells with zero total counts are left at zero before centering.
    """
    x = expr.values if isinstance(expr, ExpressionMatrix) else sp.csr_matrix(expr)
    counts = np.asarray(x.T.toarray(), dtype=np.float64)  # cells x genes
    totals = counts.sum(axis=1)
    nz = totals > 0
    if not nz.any():
        raise DegenerateInput("expression matrix is all zeros")
    target = np.median(totals[nz])
    scale = np.zeros_like(totals)
    scale[nz] = target / totals[nz]
    y = np.log1p(counts * scale[:, None])
    return y - y.mean(axis=0, keepdims=True)


def _fix_signs(scores: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(scores), axis=0)
    signs = np.sign(scores[idx, np.arange(scores.shape[1])])
    signs[signs == 0] = 1.0
    return scores * signs


def preprocess(expr, n_pcs: int = 50) -> np.ndarray:
    """Principal-component cell embedding (cells x n_pcs).

    Uses the gene-gene covariance eigendecomposition, or the cell Gram matrix
    when there are fewer cells than genes. Returns fewer components, with a
    :class:`RankDeficientWarning`, when the data has lower rank.
    """
    y = normalize_log_center(expr)
    c, g = y.shape
    if not (c > n_pcs >= 2):
        raise DegenerateInput(f"need cells ({c}) > n_pcs ({n_pcs}) >= 2")
    if c < g:
        evals, evecs = np.linalg.eigh(y @ y.T)
        evals, evecs = evals[::-1], evecs[:, ::-1]
    else:
        evals, evecs = np.linalg.eigh(y.T @ y)
        evals, evecs = evals[::-1], evecs[:, ::-1]
    tol = max(evals[0], 0.0) * max(c, g) * np.finfo(float).eps * 10
    rank = int((evals > tol).sum())
    if rank == 0:
        raise DegenerateInput("no variance left after normalization")
    k = n_pcs
    if rank < n_pcs:
        warnings.warn(
            f"only {rank} non-zero components available, {n_pcs} requested",
            RankDeficientWarning,
            stacklevel=2,
        )
        k = rank
    if c < g:
        scores = evecs[:, :k] * np.sqrt(evals[:k])
    else:
        scores = y @ evecs[:, :k]
    return _fix_signs(scores)


def knn_affinity(embed, k: int = 15) -> sp.csr_matrix:
    """Symmetric Gaussian kNN affinity with locally adaptive bandwidths.

    ``w_ij = exp(-d_ij^2 / (sigma_i sigma_j))`` with ``sigma_i`` the distance to
    the ceil(k/2)-th neighbour; kept for pairs where either cell is among the
    other's k nearest neighbours.
    """
    x = check_array(embed, dtype=np.float64)
    c = x.shape[0]
    if not 1 <= k < c:
        raise KTooLarge(f"k={k} must satisfy 1 <= k < n_cells={c}")
    tree = cKDTree(x)
    dist, idx = tree.query(x, k=k + 1)
    dist = np.atleast_2d(dist).reshape(c, k + 1)
    idx = np.atleast_2d(idx).reshape(c, k + 1)
    nd = np.empty((c, k))
    ni = np.empty((c, k), dtype=np.int64)
    rows = np.arange(c)
    for i in range(c):
        keep = idx[i] != i
        if keep.all():
            keep[-1] = False
        ni[i] = idx[i][keep]
        nd[i] = dist[i][keep]
    sigma = nd[:, math.ceil(k / 2) - 1]
    pos = sigma[sigma > 0]
    floor = (pos.min() if len(pos) else 1.0) * 1e-6
    sigma = np.maximum(sigma, floor)
    r = np.repeat(rows, k)
    cidx = ni.ravel()
    d = nd.ravel()
    w = np.exp(-(d**2) / (sigma[r] * sigma[cidx]))
    a = sp.csr_matrix((w, (r, cidx)), shape=(c, c))
    a = a.maximum(a.T).tocsr()
    a.setdiag(0.0)
    a.eliminate_zeros()
    a.sort_indices()
    return a


@dataclass(frozen=True)
class DiffusionMap:
    eigenvalues: np.ndarray  # descending, eigenvalues[0] == 1
    eigenvectors: np.ndarray  # right eigenvectors of the transition operator (cells x m+1)


def diffusion_map(affinity, m: int = 10) -> DiffusionMap:
    """Top ``m + 1`` eigenpairs of the density-normalized (alpha=1) diffusion operator."""
    k = sp.csr_matrix(affinity, dtype=np.float64)
    n = k.shape[0]
    q = np.asarray(k.sum(axis=1)).ravel()
    if (q <= 0).any():
        raise DisconnectedRoot("affinity has isolated cells")
    qi = sp.diags(1.0 / q)
    kt = qi @ k @ qi
    d = np.asarray(kt.sum(axis=1)).ravel()
    di = sp.diags(1.0 / np.sqrt(d))
    msym = (di @ kt @ di).tocsr()
    msym = (msym + msym.T) * 0.5
    n_eig = min(m + 1, n - 1)
    try:
        if n <= DENSE_EIG_LIMIT:
            evals, evecs = np.linalg.eigh(msym.toarray())
            evals, evecs = evals[::-1][:n_eig], evecs[:, ::-1][:, :n_eig]
        else:
            v0 = np.sqrt(d) / np.linalg.norm(np.sqrt(d))
            evals, evecs = eigsh(msym, k=n_eig, which="LA", v0=v0, tol=1e-12)
            order = np.argsort(-evals, kind="stable")
            evals, evecs = evals[order], evecs[:, order]
    except (np.linalg.LinAlgError, ArpackError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    if not np.isfinite(evals).all():
        raise EigSolverFailure("non-finite eigenvalues")
    psi = evecs / np.sqrt(d)[:, None]
    psi = _fix_signs(psi)
    return DiffusionMap(evals, psi)


def dpt_from(dm: DiffusionMap, source: int) -> np.ndarray:
    """Diffusion pseudotime distance from ``source`` to every cell."""
    lam = dm.eigenvalues[1:]
    w = lam / (1.0 - lam)
    diff = dm.eigenvectors[:, 1:] - dm.eigenvectors[source, 1:]
    return np.sqrt(((w * diff) ** 2).sum(axis=1))


@dataclass(frozen=True)
class PseudotimeAssignment:
    values: np.ndarray
    root_cell: int
    root_auto: bool = False
    outside_component: int = 0
    eigenvalues: np.ndarray = field(default=None, repr=False)


def diffusion_pseudotime(affinity, root: int | None = None, m: int = 10) -> PseudotimeAssignment:
    """Pseudotime as min-max normalized diffusion distance from a root cell.

    Without ``root``, the cell with the most extreme value of the first
    non-trivial diffusion component (within the largest connected component)
    is used. Cells not connected to the root get pseudotime 1.
    """
    if not 2 <= m <= 15:
        raise ValueError(f"m={m} must lie in [2, 15]")
    a = sp.csr_matrix(affinity)
    n = a.shape[0]
    ncomp, labels = connected_components(a, directed=False)
    if root is None:
        comp_label = np.bincount(labels).argmax()
    else:
        if not 0 <= root < n:
            raise DisconnectedRoot(f"root cell {root} out of range")
        comp_label = labels[root]
    comp = np.flatnonzero(labels == comp_label)
    if len(comp) < 3:
        raise DisconnectedRoot(f"root component has only {len(comp)} cells")
    dm = diffusion_map(a[comp][:, comp], m)
    if root is None:
        local_root = int(np.argmax(np.abs(dm.eigenvectors[:, 1])))
        root = int(comp[local_root])
        auto = True
        log.info("auto-selected root cell %d", root)
    else:
        local_root = int(np.searchsorted(comp, root))
        auto = False
    dist = dpt_from(dm, local_root)
    top = dist.max()
    pt = np.ones(n)
    pt[comp] = dist / top if top > 0 else 0.0
    outside = n - len(comp)
    if outside:
        warnings.warn(f"{outside} cells are disconnected from the root; pseudotime set to 1")
    return PseudotimeAssignment(pt, root, auto, outside, dm.eigenvalues)


@dataclass(frozen=True)
class BinAssignment:
    bins: np.ndarray  # 1-based per cell
    bin_boundaries: np.ndarray
    cells_per_bin: np.ndarray

    @property
    def T(self) -> int:
        return len(self.cells_per_bin)


def bin_cells(pt, min_cells: int = 300, target_bins: int = 12) -> BinAssignment:
    """Equal-frequency bins over pseudotime, ties broken by cell index.

    The number of bins is ``min(target_bins, n_cells // min_cells)``.
    """
    values = pt.values if isinstance(pt, PseudotimeAssignment) else np.asarray(pt, dtype=np.float64)
    c = len(values)
    if min_cells < 1 or target_bins < 2:
        raise ValueError("need min_cells >= 1 and target_bins >= 2")
    if c < 2 * min_cells:
        raise TooFewCells(f"{c} cells cannot fill 2 bins of at least {min_cells}")
    if np.ptp(values) == 0:
        raise DegenerateInput("all cells share one pseudotime value; bins would be arbitrary")
    T = min(target_bins, c // min_cells)
    order = np.lexsort((np.arange(c), values))
    bins = np.empty(c, dtype=np.int64)
    bounds, counts = [], []
    chunks = np.array_split(order, T)
    for b, chunk in enumerate(chunks, start=1):
        bins[chunk] = b
        counts.append(len(chunk))
        if b < T:
            bounds.append(0.5 * (values[chunk[-1]] + values[chunks[b][0]]))
    return BinAssignment(bins, np.array(bounds), np.array(counts))


def write_pseudotime_csv(path, cells, pt, bins=None) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("cell_id,pseudotime,bin\n")
        for i, c in enumerate(cells):
            b = "" if bins is None else str(int(bins[i]))
            fh.write(f"{c},{float(pt[i])!r},{b}\n")
    return path


def read_pseudotime_csv(path):
    cells, pts, bins = [], [], []
    lines = Path(path).read_text().splitlines()
    for line in lines[1:]:
        if not line:
            continue
        c, p, b = line.split(",")
        cells.append(c)
        pts.append(float(p))
        bins.append(int(b) if b else 0)
    return cells, np.array(pts), np.array(bins, dtype=np.int64)


def write_bins_json(path, ba: BinAssignment, root_cell, root_auto: bool) -> Path:
    payload = {
        "boundaries": [float(b) for b in ba.bin_boundaries],
        "counts": [int(c) for c in ba.cells_per_bin],
        "T": ba.T,
        "root_cell": root_cell,
        "root_auto_selected": bool(root_auto),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
    return Path(path)


# ------------------------------------------------------------ estimators


def _cells_by_genes(X):
    if isinstance(X, ExpressionMatrix):
        return X
    X = check_array(X, accept_sparse="csr", dtype=np.float64)
    # rows are cells; internally expression is genes x cells
    return sp.csr_matrix(X).T.tocsr()


class DiffusionPseudotime(BaseEstimator):
    """Estimator wrapper: PCA -> kNN affinity -> diffusion pseudotime.

    ``fit`` accepts an :class:`ExpressionMatrix` or a cells x genes array.
    """

    def __init__(self, n_pcs=50, n_neighbors=15, n_dcs=10, root=None):
        self.n_pcs = n_pcs
        self.n_neighbors = n_neighbors
        self.n_dcs = n_dcs
        self.root = root

    def fit(self, X, y=None):
        expr = _cells_by_genes(X)
        n_cells = expr.shape[1] if sp.issparse(expr) else expr.n_cells
        n_pcs = min(self.n_pcs, n_cells - 1)
        self.embedding_ = preprocess(expr, n_pcs)
        self.affinity_ = knn_affinity(self.embedding_, self.n_neighbors)
        res = diffusion_pseudotime(self.affinity_, self.root, self.n_dcs)
        self.pseudotime_ = res.values
        self.root_ = res.root_cell
        self.root_auto_ = res.root_auto
        self.eigenvalues_ = res.eigenvalues
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).pseudotime_


class PseudotimeBinner(TransformerMixin, BaseEstimator):
    """Equal-frequency pseudotime bins; ``transform`` uses the fitted cut points."""

    def __init__(self, min_cells=300, target_bins=12):
        self.min_cells = min_cells
        self.target_bins = target_bins

    def fit(self, X, y=None):
        pt = np.asarray(X, dtype=np.float64).ravel()
        ba = bin_cells(pt, self.min_cells, self.target_bins)
        self.bins_ = ba.bins
        self.bin_boundaries_ = ba.bin_boundaries
        self.cells_per_bin_ = ba.cells_per_bin
        self.n_bins_ = ba.T
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).bins_

    def transform(self, X):
        check_is_fitted(self, "bin_boundaries_")
        pt = np.asarray(X, dtype=np.float64).ravel()
        return np.searchsorted(self.bin_boundaries_, pt, side="right") + 1
