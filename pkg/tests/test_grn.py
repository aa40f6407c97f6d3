import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgrn.errors import BinTooSmall, ConfigError, DimensionMismatch, EmptyBin, NoRegulators
from tgrn.grn import CoexpressionGRN, GrnParams, assemble_snapshot, infer_coexpression_grn, node_features, snapshots_from_bins
from tgrn.ingest import EdgeSet, ExternalEmbeddings
from tgrn.synthetic import grn_fixture


def test_node_features_closed_form():
    f = node_features(np.array([[0.0, 2.0, 4.0], [0.0, 0.0, 0.0]]))
    assert f[0, :2].tolist() == [2.0, 2.0]
    assert abs(f[0, 2] - np.sqrt(8 / 3)) < 1e-12
    assert abs(f[0, 3] - 2 / 3) < 1e-12 and f[0, 4] == 6.0
    assert f[1].tolist() == [0.0] * 5


def test_node_features_single_cell():
    assert node_features(np.array([[5.0]])).tolist() == [[5.0, 5.0, 0.0, 1.0, 5.0]]
    with pytest.raises(EmptyBin):
        node_features(np.zeros((3, 0)))


P = GrnParams(min_abs_corr=0.5, top_k_per_tf=None, min_cells_expressed=1)


def _conf(es, a, b):
    hit = (es.src == a) & (es.dst == b)
    return float(es.confidence[hit][0]) if hit.any() else None


def test_copy_and_anticorrelated_targets():
    rng = np.random.default_rng(0)
    tf = rng.uniform(1, 5, 10)
    x = np.vstack([tf, tf, 10.0 - tf, np.full(10, 3.0)])
    for corr in ("pearson", "spearman"):
        es = infer_coexpression_grn(x, [0], GrnParams(corr=corr, min_abs_corr=0.5, top_k_per_tf=None,
                                                      min_cells_expressed=1))
        assert _conf(es, 0, 1) == pytest.approx(1.0, abs=1e-12)
        assert _conf(es, 0, 2) == pytest.approx(1.0, abs=1e-12)
        assert _conf(es, 0, 3) is None
        assert not (es.src == es.dst).any()


def test_grn_errors():
    with pytest.raises(NoRegulators):
        infer_coexpression_grn(np.ones((3, 5)), [], P)
    with pytest.raises(BinTooSmall):
        infer_coexpression_grn(np.ones((3, 2)), [0], P)
    with pytest.raises(ConfigError):
        GrnParams(min_abs_corr=None, top_k_per_tf=None)
    with pytest.raises(ConfigError):
        GrnParams(corr="kendall")


def test_top_k_limits_out_degree():
    rng = np.random.default_rng(1)
    x = rng.poisson(3, (30, 40)).astype(float)
    es = infer_coexpression_grn(x, [0, 1, 2], GrnParams(min_abs_corr=None, top_k_per_tf=4, min_cells_expressed=1))
    assert np.bincount(es.src, minlength=3)[:3].max() <= 4


def test_min_cells_expressed_filter():
    x = np.zeros((3, 12))
    x[0] = np.arange(12)
    x[1] = np.arange(12)
    x[2, :2] = [1, 2]
    es = infer_coexpression_grn(x, [0], GrnParams(min_abs_corr=0.1, top_k_per_tf=None, min_cells_expressed=5))
    assert es.dst.tolist() == [1]


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_grn_invariants(seed):
    rng = np.random.default_rng(seed)
    x = rng.poisson(2, (15, 25)).astype(float)
    regs = [0, 3, 7]
    p = GrnParams(min_abs_corr=0.3, top_k_per_tf=5, min_cells_expressed=3)
    base = infer_coexpression_grn(x, regs, p)
    assert set(base.src.tolist()) <= set(regs)
    perm = infer_coexpression_grn(x[:, rng.permutation(25)], regs, p)
    mono = infer_coexpression_grn(np.sqrt(x) * 3 + x**2, regs, p)
    for other in (perm, mono):
        assert np.array_equal(base.src, other.src) and np.array_equal(base.dst, other.dst)
        assert np.allclose(base.confidence, other.confidence, atol=1e-12)


def test_assemble_snapshot_dims():
    feats = np.ones((4, 5))
    edges = EdgeSet(1, np.array([0]), np.array([1]), np.array([0.5]))
    assert assemble_snapshot(1, edges, feats).d_x == 5
    assert assemble_snapshot(1, edges, feats, ExternalEmbeddings(np.zeros((4, 4)))).d_x == 9
    with pytest.raises(DimensionMismatch):
        assemble_snapshot(1, EdgeSet(1, np.array([0]), np.array([9]), np.array([1.0])), feats)


def test_snapshots_from_bins_fixture():
    expr, _, bins, edge_sets = grn_fixture(n_genes=50, T=4, cells_per_bin=10, n_tfs=5, edges_per_snapshot=60)
    tg = snapshots_from_bins(expr, bins, edge_sets)
    assert tg.T == 4 and tg.n_genes == 50
    cols = np.flatnonzero(bins == 2)
    assert np.allclose(tg[2].node_features, node_features(expr.dense()[:, cols]))


def test_estimator_wrapper():
    rng = np.random.default_rng(3)
    X = rng.poisson(2, (20, 8)).astype(float)  # cells x genes
    est = CoexpressionGRN(min_abs_corr=0.2, top_k_per_tf=None, min_cells_expressed=2).fit(X, regulators=[0, 1])
    A = est.adjacency()
    assert A.shape == (8, 8) and set(np.nonzero(A)[0]) <= {0, 1}
    with pytest.raises(NoRegulators):
        CoexpressionGRN().fit(X)
