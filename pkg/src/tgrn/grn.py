"""Per-bin GRN inference (co-expression surrogate), node features and snapshot assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import BinTooSmall, ConfigError, DimensionMismatch, EmptyBin, IdOutOfRange, NoRegulators
from .graph import BASE_FEATURES, Snapshot, TemporalGraph, build_temporal_graph, make_snapshot
from .ingest import EdgeSet, ExpressionMatrix, ExternalEmbeddings


@dataclass(frozen=True)
class GrnParams:
    method: str = "coexpression"
    corr: str = "spearman"
    min_abs_corr: float | None = 0.3
    top_k_per_tf: int | None = 50
    min_cells_expressed: int = 10

    def __post_init__(self):
        if self.method not in ("coexpression", "imported"):
            raise ConfigError(f"unknown GRN method {self.method!r}")
        if self.corr not in ("pearson", "spearman"):
            raise ConfigError(f"unknown correlation {self.corr!r}")
        if self.method == "coexpression" and self.min_abs_corr is None and self.top_k_per_tf is None:
            raise ConfigError("set min_abs_corr and/or top_k_per_tf")
        if self.min_abs_corr is not None and not 0 < self.min_abs_corr <= 1:
            raise ConfigError("min_abs_corr must lie in (0, 1]")


def _bin_values(expr_bin) -> np.ndarray:
    if isinstance(expr_bin, ExpressionMatrix):
        return expr_bin.dense()
    if sp.issparse(expr_bin):
        return expr_bin.toarray()
    return np.asarray(expr_bin, dtype=np.float64)


def node_features(expr_bin) -> np.ndarray:
    """Per-gene [mean, median, std (population), nonzero fraction, total] over a bin's cells."""
    x = _bin_values(expr_bin)
    if x.ndim != 2 or x.shape[1] == 0:
        raise EmptyBin("bin has no cells")
    return np.column_stack(
        [
            x.mean(axis=1),
            np.median(x, axis=1),
            x.std(axis=1),
            (x != 0).mean(axis=1),
            x.sum(axis=1),
        ]
    )


def _standardize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centered = x - x.mean(axis=1, keepdims=True)
    norm = np.sqrt((centered**2).sum(axis=1))
    ok = norm > 0
    out = np.zeros_like(centered)
    out[ok] = centered[ok] / norm[ok, None]
    return out, ok


def correlation_to(x: np.ndarray, rows: np.ndarray, method: str) -> np.ndarray:
    """Correlation of each gene in ``rows`` with every gene (len(rows) x n_genes).

    Constant genes get NaN.
    """
    if method == "spearman":
        x = rankdata(x, axis=1)
    z, ok = _standardize_rows(np.asarray(x, dtype=np.float64))
    corr = z[rows] @ z.T
    corr[:, ~ok] = np.nan
    corr[~ok[rows], :] = np.nan
    return np.clip(corr, -1.0, 1.0)


def infer_coexpression_grn(expr_bin, regulators, params: GrnParams = GrnParams()) -> EdgeSet:
    """Directed TF -> target edges weighted by absolute correlation.

    Both genes must be expressed in at least ``min_cells_expressed`` cells and
    be non-constant. Pairs are kept if ``|corr| >= min_abs_corr`` and (when
    set) rank among the TF's ``top_k_per_tf`` strongest partners.
    """
    x = _bin_values(expr_bin)
    tfs = np.array(sorted(set(int(r) for r in regulators)), dtype=np.int64)
    if len(tfs) == 0:
        raise NoRegulators("regulator list is empty")
    n, c = x.shape
    if c < 3:
        raise BinTooSmall(f"bin has {c} cells; need at least 3")
    if tfs.max() >= n or tfs.min() < 0:
        raise IdOutOfRange("regulator id outside the vocabulary")
    expressed = (x != 0).sum(axis=1) >= params.min_cells_expressed
    corr = correlation_to(x, tfs, params.corr)
    strength = np.abs(corr)
    strength[np.isnan(strength)] = 0.0
    strength[:, ~expressed] = 0.0
    strength[~expressed[tfs], :] = 0.0
    strength[np.arange(len(tfs)), tfs] = 0.0
    keep = strength > 0
    if params.min_abs_corr is not None:
        keep &= strength >= params.min_abs_corr
    if params.top_k_per_tf is not None:
        k = params.top_k_per_tf
        for r in range(len(tfs)):
            cand = np.flatnonzero(keep[r])
            if len(cand) > k:
                # strongest first; ties by ascending gene id
                order = np.lexsort((cand, -strength[r, cand]))
                drop = cand[order[k:]]
                keep[r, drop] = False
    ri, gi = np.nonzero(keep)
    src, dst, conf = tfs[ri], gi.astype(np.int64), strength[ri, gi]
    order = np.lexsort((dst, src))
    return EdgeSet(0, src[order], dst[order], conf[order])


def assemble_snapshot(
    t: int,
    edges,
    features: np.ndarray,
    embeddings: ExternalEmbeddings | np.ndarray | None = None,
) -> Snapshot:
    """Snapshot with ``[5 statistics | optional embeddings]`` as node features."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != len(BASE_FEATURES):
        raise DimensionMismatch(f"features must be |V| x 5, got {features.shape}")
    n = features.shape[0]
    if embeddings is not None:
        emb = embeddings.matrix if isinstance(embeddings, ExternalEmbeddings) else np.asarray(embeddings)
        if emb.shape[0] != n:
            raise DimensionMismatch(f"embeddings have {emb.shape[0]} rows for {n} genes")
        features = np.hstack([features, emb])
    if isinstance(edges, EdgeSet):
        edges = edges.as_tuple()
    try:
        return make_snapshot(t, edges, features, n)
    except IdOutOfRange as exc:
        raise DimensionMismatch(str(exc)) from exc


def snapshots_from_bins(
    expr: ExpressionMatrix,
    bins: np.ndarray,
    edge_sets,
    embeddings: ExternalEmbeddings | None = None,
) -> TemporalGraph:
    """Combine per-bin node features with per-bin edge sets into a temporal graph."""
    bins = np.asarray(bins)
    T = int(bins.max())
    edge_sets = list(edge_sets)
    if len(edge_sets) != T:
        raise DimensionMismatch(f"{len(edge_sets)} edge sets for {T} bins")
    snaps = []
    for t in range(1, T + 1):
        cols = np.flatnonzero(bins == t)
        if len(cols) == 0:
            raise EmptyBin(f"bin {t} has no cells")
        feats = node_features(expr.values[:, cols])
        snaps.append(assemble_snapshot(t, edge_sets[t - 1], feats, embeddings))
    names = BASE_FEATURES
    if embeddings is not None:
        names = names + tuple(f"emb_{i}" for i in range(embeddings.d_emb))
    return build_temporal_graph(expr.genes, snaps, names)


class CoexpressionGRN(BaseEstimator):
    """Estimator form of :func:`infer_coexpression_grn`.

    ``fit(X, regulators=...)`` takes a bin's cells x genes matrix (or an
    :class:`ExpressionMatrix` slice) and stores ``edges_``.
    """

    def __init__(self, corr="spearman", min_abs_corr=0.3, top_k_per_tf=50, min_cells_expressed=10):
        self.corr = corr
        self.min_abs_corr = min_abs_corr
        self.top_k_per_tf = top_k_per_tf
        self.min_cells_expressed = min_cells_expressed

    def _params(self):
        return GrnParams("coexpression", self.corr, self.min_abs_corr, self.top_k_per_tf, self.min_cells_expressed)

    def fit(self, X, y=None, regulators=None):
        if regulators is None:
            raise NoRegulators("regulators are required")
        x = X if isinstance(X, ExpressionMatrix) else _bin_values(X).T
        self.edges_ = infer_coexpression_grn(x, regulators, self._params())
        self.node_features_ = node_features(x)
        return self

    def adjacency(self, n_genes=None):
        check_is_fitted(self, "edges_")
        e = self.edges_
        n = n_genes or self.node_features_.shape[0]
        return sp.csr_matrix((e.confidence, (e.src, e.dst)), shape=(n, n))
