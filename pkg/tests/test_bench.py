import json
import math
import warnings

import numpy as np
import pytest

from tgrn.bench import (
    RunFragment,
    TrainParams,
    aggregate_fragments,
    build_report,
    hub_heatmap,
    live_update_run,
    write_report,
)
from tgrn.bench.runner import bench_jobs, run_benchmark
from tgrn.errors import ConfigError, ConfigMismatch, EmptySeries, NoNegativesAvailable, TooFewSnapshots
from tgrn.graph import GeneVocab, build_temporal_graph, make_snapshot
from tgrn.models import ModelConfig
from tgrn.synthetic import fully_recurrent_graph, planted_rotation_graph
from tgrn.tasks import expression_target, link_candidates, sample_negatives

FAST = TrainParams(warmup_epochs=3, finetune_epochs=1)


def _snap(t, edges, n=4, x=None):
    x = np.ones((n, 5)) if x is None else x
    return make_snapshot(t, [(a, b, 1.0) for a, b in edges], x)


def test_negatives_saturated_graph():
    s = _snap(1, [(a, b) for a in range(3) for b in range(3) if a != b], n=3)
    with pytest.raises(NoNegativesAvailable):
        sample_negatives(s, 1.0, seed=0)


def test_negatives_constraint_and_determinism():
    s = _snap(1, [(0, 1), (2, 3)])
    neg = sample_negatives(s, 1.0, seed=7)
    assert neg.shape == (2, 2)
    keys = set(map(tuple, neg.tolist()))
    assert not keys & {(0, 1), (2, 3)}
    assert all(a != b and s.active_mask[a] and s.active_mask[b] for a, b in keys)
    assert np.array_equal(neg, sample_negatives(s, 1.0, seed=7))


def test_negatives_short_feasible_set_warns():
    s = _snap(1, [(0, 1), (1, 0), (0, 2)], n=3)
    with pytest.warns(UserWarning):
        neg = sample_negatives(s, 2.0, seed=0)
    assert len(neg) == 3


def test_negatives_rejection_path_large_graph():
    n = 400
    edges = [(i, (i + 1) % n) for i in range(n)]
    s = make_snapshot(1, [(a, b, 1.0) for a, b in edges], np.ones((n, 5)))
    neg = sample_negatives(s, 1.0, seed=3)
    keys = neg[:, 0] * n + neg[:, 1]
    assert len(np.unique(keys)) == n
    assert not np.isin(keys, s.edge_keys()).any()
    assert (neg[:, 0] != neg[:, 1]).all()


def test_link_candidates_labels():
    s = _snap(1, [(0, 1), (2, 3)])
    pairs, labels = link_candidates(s, 1.0, seed=0)
    assert labels.tolist() == [1, 1, 0, 0]
    assert pairs[:2].tolist() == [[0, 1], [2, 3]]


def test_expression_target_telescopes():
    rng = np.random.default_rng(0)
    n, T = 6, 5
    snaps = [make_snapshot(t, [(0, 1, 1.0), (2, 3, 1.0), (4, 5, 1.0)], rng.random((n, 5))) for t in range(1, T + 1)]
    tg = build_temporal_graph(GeneVocab([f"g{i}" for i in range(n)]), snaps)
    total = np.zeros(n)
    for t in range(2, T):
        genes, d = expression_target(tg[t], tg[t + 1])
        total[genes] += d
    expect = tg[T].node_features[:, 0] - tg[2].node_features[:, 0]
    assert np.allclose(total, expect, atol=1e-10)


def test_protocol_step_count_minimal():
    tg = fully_recurrent_graph(n_genes=20, T=3, n_edges=30)
    f = live_update_run(tg, ModelConfig("edgebank"), "link", FAST, 0)
    assert [s["target_snapshot"] for s in f.steps] == [3]


def test_protocol_requires_three_snapshots():
    tg = fully_recurrent_graph(n_genes=20, T=2, n_edges=30)
    with pytest.raises(TooFewSnapshots):
        live_update_run(tg, ModelConfig("edgebank"), "link", FAST, 0)


def test_edgebank_is_link_only():
    tg = fully_recurrent_graph(n_genes=20, T=3, n_edges=30)
    with pytest.raises(ConfigError):
        live_update_run(tg, ModelConfig("edgebank"), "centrality", FAST, 0)


def test_edgebank_fully_recurrent():
    tg = fully_recurrent_graph()
    f = live_update_run(tg, ModelConfig("edgebank"), "link", TrainParams(), 0)
    assert (f.metric_matrix("auprc") >= 0.99).all()


def test_static_family_ignores_history():
    """Shuffling the snapshots before t leaves static-model step metrics untouched."""
    tg = planted_rotation_graph(n_genes=30, T=6, width=2)
    shuffled = tg.with_snapshots([tg[1], tg[3], tg[2], tg[4], tg[5], tg[6]])
    p = TrainParams(warmup_epochs=0, finetune_epochs=0, t_warm=4)
    for fam in ("gcn", "chebnet", "mlp"):
        a = live_update_run(tg, ModelConfig(fam, hidden=8), "link", p, 0)
        b = live_update_run(shuffled, ModelConfig(fam, hidden=8), "link", p, 0)
        assert a.steps == b.steps


def test_temporal_family_sees_history():
    tg = planted_rotation_graph(n_genes=30, T=6, width=2)
    shuffled = tg.with_snapshots([tg[1], tg[3], tg[2], tg[4], tg[5], tg[6]])
    p = TrainParams(warmup_epochs=0, finetune_epochs=0, t_warm=4)
    a = live_update_run(tg, ModelConfig("gcrn-gru", hidden=8), "link", p, 0)
    b = live_update_run(shuffled, ModelConfig("gcrn-gru", hidden=8), "link", p, 0)
    assert a.metric_matrix("auprc").tolist() != b.metric_matrix("auprc").tolist()


def _frag(seed, values, h="abc", task="link"):
    steps = [{"step": i + 1, "t": i + 2, "target_snapshot": i + 3, "status": "ok", "metrics": {"auprc": v}}
             for i, v in enumerate(values)]
    return RunFragment("gcn", task, seed, {}, h, steps)


def test_aggregate_closed_form_std():
    agg = aggregate_fragments([_frag(0, [0.9]), _frag(1, [1.0])])
    m = agg["metrics"]["auprc"]
    assert m["mean"] == pytest.approx(0.95)
    assert m["std"] == pytest.approx(math.sqrt(0.005), abs=1e-15)
    assert m["n_seeds"] == 2


def test_aggregate_identical_fragments_zero_std():
    agg = aggregate_fragments([_frag(s, [0.5, 0.7]) for s in range(5)])
    assert agg["metrics"]["auprc"]["std"] == 0.0
    assert agg["metrics"]["auprc"]["mean"] == pytest.approx(0.6)


def test_aggregate_single_seed_std_zero():
    assert aggregate_fragments([_frag(0, [0.3])])["metrics"]["auprc"]["std"] == 0.0


def test_aggregate_missing_values_counted():
    agg = aggregate_fragments([_frag(0, [0.5, float("nan")]), _frag(1, [0.7, 0.9])])
    m = agg["metrics"]["auprc"]
    assert m["n_missing"] == 1
    assert m["mean"] == pytest.approx((0.5 + 0.8) / 2)
    assert m["per_step_mean"] == pytest.approx([0.6, 0.9])


def test_aggregate_config_mismatch():
    with pytest.raises(ConfigMismatch):
        aggregate_fragments([_frag(0, [0.5]), _frag(1, [0.5], h="zzz")])
    with pytest.raises(ConfigMismatch):
        aggregate_fragments([_frag(0, [0.5]), _frag(0, [0.5])])


def test_hub_heatmap_selection():
    preds = [np.array([0.1, 0.9, 0.3, 0.0]), np.array([0.8, 0.2, 0.3, 0.0])]
    mat, genes = hub_heatmap(preds, top_n=2)
    assert list(genes) == [1, 0]
    assert mat.tolist() == [[0.9, 0.2], [0.1, 0.8]]


def test_hub_heatmap_single_step_and_ties():
    mat, genes = hub_heatmap([np.full(5, 0.4)], top_n=3, genes=list("abcde"))
    assert genes == ["a", "b", "c"] and mat.shape == (3, 1)
    with pytest.raises(EmptySeries):
        hub_heatmap([], top_n=3)


def test_fragment_json_round_trip():
    f = _frag(3, [0.5, float("nan")])
    f.predictions = [np.array([0.1, 0.2]), None]
    g = RunFragment.from_json(json.loads(json.dumps(f.to_json(with_predictions=True))))
    assert g.seed == 3 and math.isnan(g.steps[1]["metrics"]["auprc"])
    assert g.predictions[0].tolist() == [0.1, 0.2] and g.predictions[1] is None


def test_bench_jobs_skip_edgebank_node_tasks():
    jobs, skipped = bench_jobs([ModelConfig("edgebank"), ModelConfig("linear")], ("link", "centrality"), (0, 1))
    assert len(jobs) == 2 + 4
    assert [(s["family"], s["task"]) for s in skipped] == [("edgebank", "centrality")]


def test_report_is_deterministic_and_complete(tmp_path):
    tg = planted_rotation_graph(n_genes=24, T=4, width=2)
    models = [ModelConfig("linear", hidden=4), ModelConfig("gcrn-gru", hidden=4)]
    runs = []
    for _ in range(2):
        frags, _ = run_benchmark(tg, models, ("link", "centrality"), (0, 1), FAST)
        runs.append(build_report(frags, tg, {"x": 1}, top_n=5))
    assert json.dumps(runs[0], sort_keys=True) == json.dumps(runs[1], sort_keys=True)
    files = write_report(runs[0], tmp_path)
    names = {p.name for p in files}
    assert {"report.json", "trend_link.csv", "trend_centrality.csv", "hub_heatmap.csv"} <= names
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["schema_version"] == 1
    assert {(r["family"], r["task"]) for r in rep["results"]} == {
        ("linear", "link"), ("linear", "centrality"), ("gcrn-gru", "link"), ("gcrn-gru", "centrality")}
    heat = (tmp_path / "hub_heatmap.csv").read_text().splitlines()
    assert heat[0] == "gene,step_1,step_2" and len(heat) == 6


def test_report_json_has_no_nan(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = build_report([_frag(0, [float("nan"), 0.5])])
    write_report(rep, tmp_path)
    assert "NaN" not in (tmp_path / "report.json").read_text()
