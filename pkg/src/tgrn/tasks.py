"""Targets and candidate pairs for the three forecasting tasks."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import NoNegativesAvailable
from .graph import Snapshot, out_degree_centrality

TASKS = ("link", "expression", "centrality")


def sample_negatives(snapshot: Snapshot, ratio: float = 1.0, seed=None, n: int | None = None) -> np.ndarray:
    """Uniformly sample ordered non-edges between genes active in ``snapshot``.

    Returns an ``(m, 2)`` array with ``m = round(ratio * |E|)`` (or ``n`` when
    given). If fewer feasible pairs exist, all of them are returned with a
    warning.
    """
    rng = np.random.default_rng(seed)
    active = np.flatnonzero(snapshot.active_mask)
    na = len(active)
    if na < 2:
        raise NoNegativesAvailable(f"snapshot {snapshot.t}: fewer than 2 active genes")
    n_genes = snapshot.n_genes
    edges = snapshot.edge_keys()
    feasible = na * (na - 1) - len(edges)
    if feasible <= 0:
        raise NoNegativesAvailable(f"snapshot {snapshot.t}: active genes form a complete graph")
    want = int(round(ratio * len(edges))) if n is None else int(n)
    if want <= 0:
        return np.empty((0, 2), dtype=np.int64)
    if want >= feasible or feasible <= 4 * want:
        # enumerate the feasible set
        a, b = np.meshgrid(active, active, indexing="ij")
        keys = (a * n_genes + b).ravel()
        keys = keys[a.ravel() != b.ravel()]
        keys = keys[~np.isin(keys, edges, assume_unique=True)]
        if want >= feasible:
            if want > feasible:
                warnings.warn(
                    f"snapshot {snapshot.t}: only {feasible} negatives available, {want} requested",
                    stacklevel=2,
                )
            chosen = rng.permutation(keys)
        else:
            chosen = rng.choice(keys, size=want, replace=False)
    else:
        seen = set()
        out = []
        while len(out) < want:
            m = max(2 * (want - len(out)), 16)
            s = active[rng.integers(0, na, m)]
            d = active[rng.integers(0, na, m)]
            keys = s * n_genes + d
            ok = (s != d) & ~np.isin(keys, edges)
            for k in keys[ok].tolist():
                if k not in seen:
                    seen.add(k)
                    out.append(k)
                    if len(out) == want:
                        break
        chosen = np.array(out, dtype=np.int64)
    return np.column_stack([chosen // n_genes, chosen % n_genes]).astype(np.int64)


def link_candidates(next_snapshot: Snapshot, ratio: float = 1.0, seed=None):
    """Positive pairs of ``next_snapshot`` plus sampled negatives, with 0/1 labels."""
    pos = np.column_stack([next_snapshot.src, next_snapshot.dst]).astype(np.int64)
    neg = sample_negatives(next_snapshot, ratio, seed)
    pairs = np.vstack([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return pairs, labels


def mean_expression(snapshot: Snapshot) -> np.ndarray:
    return np.asarray(snapshot.node_features[:, 0])


def expression_target(current: Snapshot, nxt: Snapshot):
    """``(genes, delta)``: change in mean expression over genes active at both steps."""
    genes = np.flatnonzero(current.active_mask & nxt.active_mask)
    delta = mean_expression(nxt)[genes] - mean_expression(current)[genes]
    return genes, delta


def centrality_target(nxt: Snapshot):
    genes = np.arange(nxt.n_genes)
    return genes, out_degree_centrality(nxt)
