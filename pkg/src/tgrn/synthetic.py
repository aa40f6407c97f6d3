"""Synthetic fixtures with known ground truth for tests, examples and benchmarks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import BASE_FEATURES, GeneVocab, TemporalGraph, build_temporal_graph, make_snapshot
from .ingest import EdgeSet, ExpressionMatrix, write_grn_edgelists


def gene_vocab(n: int, prefix: str = "G") -> GeneVocab:
    width = len(str(n - 1))
    return GeneVocab([f"{prefix}{i:0{width}d}" for i in range(n)])


def _random_edges(rng, n, m):
    keys = rng.choice(n * (n - 1), size=m, replace=False)
    src = keys // (n - 1)
    off = keys % (n - 1)
    dst = off + (off >= src)
    return src, dst


def fully_recurrent_graph(n_genes: int = 100, T: int = 6, n_edges: int = 300, seed: int = 0) -> TemporalGraph:
    """The same random edge set in every snapshot; features drift slowly."""
    rng = np.random.default_rng(seed)
    src, dst = _random_edges(rng, n_genes, n_edges)
    base = rng.gamma(2.0, 1.0, size=(n_genes, len(BASE_FEATURES)))
    snaps = []
    for t in range(1, T + 1):
        conf = rng.uniform(0.5, 1.0, len(src))
        x = base * (1.0 + 0.05 * rng.standard_normal(base.shape)) ** 2
        snaps.append(make_snapshot(t, (src, dst, conf), x))
    return build_temporal_graph(gene_vocab(n_genes), snaps)


def planted_rotation_graph(n_genes: int = 100, T: int = 6, width: int = 3, seed: int = 0) -> TemporalGraph:
    """Genes sit on a ring; at snapshot t gene i regulates i + width*t + w (w < width).

    The offset advances by ``width`` each step, so no edge ever recurs while
    T * width < n_genes. Features are fixed ring coordinates plus a little noise.
    """
    if T * width >= n_genes:
        raise ValueError("T * width must stay below n_genes so edges never wrap onto old offsets")
    rng = np.random.default_rng(seed)
    theta = 2 * np.pi * np.arange(n_genes) / n_genes
    src = np.repeat(np.arange(n_genes), width)
    w = np.tile(np.arange(width), n_genes)
    snaps = []
    for t in range(1, T + 1):
        dst = (src + width * t + w) % n_genes
        x = np.column_stack(
            [np.cos(theta), np.sin(theta), np.cos(2 * theta), np.sin(2 * theta), rng.normal(0, 0.1, n_genes)]
        ) + 2.0
        snaps.append(make_snapshot(t, (src, dst, np.ones(len(src))), x))
    return build_temporal_graph(gene_vocab(n_genes), snaps)


def curve_expression(n_cells: int = 300, n_genes: int = 60, noise: float = 0.3, depth: float = 20.0, seed: int = 0):
    """Counts for cells along a 1-D gradient.

    Each gene's rate is a Gaussian bump or a ramp over latent time in [0, 1];
    log-rates get Gaussian noise, then counts are Poisson. Returns
    ``(ExpressionMatrix genes x cells, true_time)`` with cells in shuffled order.
    """
    rng = np.random.default_rng(seed)
    tt = rng.permutation(np.linspace(0.0, 1.0, n_cells))
    centers = rng.uniform(-0.1, 1.1, n_genes)
    widths = rng.uniform(0.15, 0.4, n_genes)
    ramp = rng.random(n_genes) < 0.3
    bump = np.exp(-0.5 * ((tt[None, :] - centers[:, None]) / widths[:, None]) ** 2)
    lin = np.where((rng.random(n_genes) < 0.5)[:, None], tt[None, :], 1 - tt[None, :])
    shape = np.where(ramp[:, None], lin, bump)
    rate = depth * shape * np.exp(noise * rng.standard_normal(shape.shape)) + 0.05
    counts = rng.poisson(rate).astype(np.float64)
    genes = gene_vocab(n_genes)
    cells = [f"cell{i:04d}" for i in range(n_cells)]
    return ExpressionMatrix.from_dense(counts, genes, cells), tt


def grn_fixture(n_genes: int = 200, T: int = 8, cells_per_bin: int = 40, n_tfs: int = 20,
                edges_per_snapshot: int = 600, churn: float = 0.2, seed: int = 0):
    """Expression, bins and per-snapshot TF->target edge sets for an end-to-end run.

    A core network persists with probability ``1 - churn`` per step; replaced
    edges are drawn from the TFs. Hub TFs get more targets. Expression of each
    gene follows a smooth trend over bins.
    """
    rng = np.random.default_rng(seed)
    vocab = gene_vocab(n_genes)
    tfs = np.arange(n_tfs)
    hub_w = rng.dirichlet(np.full(n_tfs, 0.7))

    def draw(m):
        s = rng.choice(tfs, size=m, p=hub_w)
        d = rng.integers(0, n_genes, m)
        ok = s != d
        return s[ok], d[ok]

    keys = set()
    while len(keys) < edges_per_snapshot:
        s, d = draw(edges_per_snapshot)
        keys.update((s * n_genes + d).tolist())
    cur = np.array(sorted(keys)[:edges_per_snapshot], dtype=np.int64)
    edge_sets = []
    for t in range(1, T + 1):
        if t > 1:
            keep = cur[rng.random(len(cur)) >= churn]
            pool = set(keep.tolist())
            while len(pool) < edges_per_snapshot:
                s, d = draw(edges_per_snapshot)
                for k in (s * n_genes + d).tolist():
                    pool.add(k)
                    if len(pool) == edges_per_snapshot:
                        break
            cur = np.array(sorted(pool), dtype=np.int64)
        src, dst = cur // n_genes, cur % n_genes
        edge_sets.append(EdgeSet(t, src, dst, np.round(rng.uniform(0.1, 5.0, len(cur)), 4)))

    n_cells = T * cells_per_bin
    bins = np.repeat(np.arange(1, T + 1), cells_per_bin)
    tt = (bins - 1 + rng.random(n_cells)) / T
    slope = rng.normal(0, 1.5, n_genes)
    level = rng.uniform(0.5, 3.0, n_genes)
    rate = np.exp(np.log(level)[:, None] + slope[:, None] * (tt[None, :] - 0.5))
    counts = rng.poisson(rate).astype(np.float64)
    cells = [f"cell{i:04d}" for i in range(n_cells)]
    expr = ExpressionMatrix.from_dense(counts, vocab, cells)
    return expr, tt, bins, edge_sets


def write_grn_fixture(directory, **kw) -> dict:
    """Write :func:`grn_fixture` outputs in the formats the CLI consumes.

    Files: ``expression.csv`` (genes x cells), ``pseudotime.csv`` (with bins),
    ``edges.tsv`` (edge-list import schema), ``regulators.txt``.
    """
    from .trajectory import write_pseudotime_csv

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    expr, tt, bins, edge_sets = grn_fixture(**kw)
    dense = expr.dense()
    with open(d / "expression.csv", "w") as fh:
        fh.write("gene," + ",".join(expr.cells) + "\n")
        for g, row in zip(expr.genes.symbols, dense):
            fh.write(g + "," + ",".join(str(int(v)) for v in row) + "\n")
    write_pseudotime_csv(d / "pseudotime.csv", expr.cells, tt, bins)
    write_grn_edgelists(d / "edges.tsv", edge_sets, expr.genes)
    n_tfs = kw.get("n_tfs", 20)
    (d / "regulators.txt").write_text("\n".join(expr.genes.symbols[:n_tfs]) + "\n")
    return {
        "expression": d / "expression.csv",
        "pseudotime": d / "pseudotime.csv",
        "edges": d / "edges.tsv",
        "regulators": d / "regulators.txt",
    }
