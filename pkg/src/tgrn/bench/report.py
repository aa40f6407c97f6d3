"""Seed aggregation and the report / plot-data writers."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..errors import ConfigMismatch, EmptyInput, EmptySeries, IoFailure
from ..graph import TemporalGraph, recurrence_stats
from .protocol import TASK_METRICS, RunFragment, _finite_or_none

REPORT_SCHEMA_VERSION = 1


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return float("nan"), float("nan")
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return mean, std


def aggregate_fragments(fragments: list[RunFragment]) -> dict:
    """Mean and sample std across seeds for one (family, task) group.

    Each seed contributes the unweighted mean of its finite step values;
    missing step values are skipped and counted.
    """
    if not fragments:
        raise EmptyInput("no fragments to aggregate")
    ref = fragments[0]
    for f in fragments[1:]:
        if f.config_hash != ref.config_hash or (f.family, f.task) != (ref.family, ref.task):
            raise ConfigMismatch(
                f"fragment seed={f.seed} ({f.family}/{f.task}, {f.config_hash}) differs from "
                f"seed={ref.seed} ({ref.family}/{ref.task}, {ref.config_hash})"
            )
    seeds = [f.seed for f in fragments]
    if len(set(seeds)) != len(seeds):
        raise ConfigMismatch(f"duplicate seeds {seeds}")
    n_steps = len(ref.steps)
    metrics = {}
    for m in TASK_METRICS[ref.task]:
        mat = np.vstack([f.metric_matrix(m) for f in fragments]) if n_steps else np.empty((len(fragments), 0))
        ok = np.isfinite(mat)
        per_seed = [float(row[mask].mean()) for row, mask in zip(mat, ok) if mask.any()]
        mean, std = _mean_std(per_seed)
        step_mean = []
        for j in range(n_steps):
            col = mat[ok[:, j], j]
            step_mean.append(float(col.mean()) if len(col) else float("nan"))
        metrics[m] = {
            "mean": mean,
            "std": std,
            "n_seeds": len(per_seed),
            "n_missing": int((~ok).sum()),
            "per_step_mean": step_mean,
        }
    return {
        "family": ref.family,
        "task": ref.task,
        "config_hash": ref.config_hash,
        "config": ref.config,
        "seeds": seeds,
        "metrics": metrics,
    }


def hub_heatmap(step_predictions, top_n: int = 20, genes=None):
    """Pick the ``top_n`` genes by their maximum predicted centrality over steps.

    Returns ``(matrix genes x steps, gene_ids)``; ties are broken by ascending gene id.
    """
    preds = [np.asarray(p, dtype=np.float64) for p in step_predictions if p is not None]
    if not preds:
        raise EmptySeries("no per-step centrality predictions")
    P = np.column_stack(preds)
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    peak = P.max(axis=1)
    ids = np.arange(P.shape[0])
    order = np.lexsort((ids, -peak))[: min(top_n, P.shape[0])]
    labels = order if genes is None else [genes[i] for i in order]
    return P[order], labels


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite_or_none(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def build_report(fragments: list[RunFragment], tg: TemporalGraph | None = None, run_config: dict | None = None,
                 top_n: int = 20, heatmap_family: str | None = None) -> dict:
    """Assemble the full report from all fragments of a benchmark run."""
    groups: dict = {}
    for f in fragments:
        groups.setdefault((f.family, f.task), []).append(f)
    results = [aggregate_fragments(sorted(g, key=lambda f: f.seed)) for _, g in sorted(groups.items())]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": run_config or {},
        "results": results,
        "runs": [f.to_json() for f in sorted(fragments, key=lambda f: (f.family, f.task, f.seed))],
        "plot_data": {},
    }
    if tg is not None:
        rec = recurrence_stats(tg)
        report["plot_data"]["recurrence"] = {"per_snapshot": rec.to_rows(), "average": rec.average}
    heat = _heatmap_from(fragments, top_n, heatmap_family, tg)
    if heat is not None:
        report["plot_data"]["hub_heatmap"] = heat
    return _clean(report)


def _heatmap_from(fragments, top_n, family, tg):
    cands = [f for f in fragments if f.task == "centrality" and any(p is not None for p in f.predictions)]
    if family is not None:
        cands = [f for f in cands if f.family == family]
    if not cands:
        return None
    # prefer a temporal family, then the lowest seed
    pref = {"roland": 0, "gcrn-gru": 1, "evolvegcn": 2}
    f = min(cands, key=lambda f: (pref.get(f.family, 9), f.family, f.seed))
    steps = [s["target_snapshot"] for s, p in zip(f.steps, f.predictions) if p is not None]
    genes = list(tg.vocab.symbols) if tg is not None else None
    mat, labels = hub_heatmap(f.predictions, top_n, genes)
    return {
        "family": f.family,
        "seed": f.seed,
        "target_snapshots": steps,
        "genes": [str(g) for g in labels],
        "values": mat.tolist(),
    }


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_report(report: dict, out_dir) -> list[Path]:
    """Write ``report.json``, ``trend_<task>.csv`` and ``hub_heatmap.csv``."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        p = out / "report.json"
        p.write_text(json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n")
        written.append(p)
        by_task: dict = {}
        for r in report["results"]:
            by_task.setdefault(r["task"], []).append(r)
        for task, rows in sorted(by_task.items()):
            p = out / f"trend_{task}.csv"
            cols = [(r["family"], m) for r in rows for m in TASK_METRICS[task]]
            n_steps = max(len(r["metrics"][TASK_METRICS[task][0]]["per_step_mean"]) for r in rows)
            steps = _target_steps(report, task, n_steps)
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["step", "target_snapshot"] + [f"{fam}:{m}" for fam, m in cols])
                for j in range(n_steps):
                    row = [j + 1, steps[j]]
                    for r in rows:
                        for m in TASK_METRICS[task]:
                            series = r["metrics"][m]["per_step_mean"]
                            row.append(_fmt(series[j]) if j < len(series) else "")
                    w.writerow(row)
            written.append(p)
        rec = report.get("plot_data", {}).get("recurrence")
        if rec:
            p = out / "trend_recurrence.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                rows = rec["per_snapshot"]
                keys = list(rows[0].keys()) if rows else ["t"]
                w.writerow(keys)
                for row in rows:
                    w.writerow([_fmt(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
            written.append(p)
        heat = report.get("plot_data", {}).get("hub_heatmap")
        if heat:
            p = out / "hub_heatmap.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["gene"] + [f"step_{j + 1}" for j in range(len(heat["target_snapshots"]))])
                for g, vals in zip(heat["genes"], heat["values"]):
                    w.writerow([g] + [_fmt(v) for v in vals])
            written.append(p)
    except OSError as e:
        raise IoFailure(f"cannot write report to {out}: {e}") from e
    return written


def _target_steps(report, task, n):
    for run in report["runs"]:
        if run["task"] == task and len(run["steps"]) == n:
            return [s["target_snapshot"] for s in run["steps"]]
    return [""] * n
