"""Command-line pipeline: ingest -> pseudotime -> bin -> infer-grn/import-grn -> build-graph -> stats -> run-bench -> report.

Each stage writes into ``<output>/<stage>/`` together with ``decisions.json``
(choices the stage made) and ``stamp.json`` (hash of inputs and parameters).
Re-running a stage whose stamp matches is a no-op unless ``--force`` is given.
Failures print one JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import OUTPUT_ROOT_ENV, RunConfig, dump_config, load_config
from .errors import ConfigError, TgrnError
from .models import ModelConfig

log = logging.getLogger("tgrn")

EXIT_PIPELINE_ERROR = 1
EXIT_INTERNAL_ERROR = 3
STAMP_VERSION = 1


class Ctx:
    def __init__(self, cfg: RunConfig, out: Path, threads: int, dry_run: bool, force: bool):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.dry_run = dry_run
        self.force = force

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage


# ------------------------------------------------------------------ helpers


def _sha256_path(p: Path) -> str:
    h = hashlib.sha256()
    files = sorted(q for q in p.rglob("*") if q.is_file() and q.name != "stamp.json") if p.is_dir() else [p]
    for f in files:
        h.update(str(f.relative_to(p) if p.is_dir() else f.name).encode())
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _stamp(inputs: dict, params: dict) -> dict:
    return {
        "stamp_version": STAMP_VERSION,
        "inputs": {k: _sha256_path(Path(v)) for k, v in sorted(inputs.items()) if v is not None},
        "params": json.loads(json.dumps(params, sort_keys=True, default=str)),
    }


def _up_to_date(ctx: Ctx, stage: str, stamp: dict, outputs: list[str]) -> bool:
    d = ctx.stage_dir(stage)
    sp_ = d / "stamp.json"
    if ctx.force or not sp_.is_file():
        return False
    if not all((d / o).exists() for o in outputs):
        return False
    try:
        return json.loads(sp_.read_text()) == stamp
    except json.JSONDecodeError:
        return False


def _finish(ctx: Ctx, stage: str, stamp: dict, decisions: dict):
    d = ctx.stage_dir(stage)
    (d / "decisions.json").write_text(json.dumps(decisions, sort_keys=True, indent=2, default=str) + "\n")
    (d / "stamp.json").write_text(json.dumps(stamp, sort_keys=True, indent=2) + "\n")
    click.echo(json.dumps({"stage": stage, "status": "ok", "output": str(d)}))


def _skip(stage: str, d: Path):
    log.info("%s: inputs unchanged, nothing to do", stage)
    click.echo(json.dumps({"stage": stage, "status": "up-to-date", "output": str(d)}))


def _require(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} given (set it in the config or pass the flag)")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _first_existing(*paths):
    for p in paths:
        if p is not None and Path(p).exists():
            return Path(p)
    return None


def _dry(ctx: Ctx, stage: str, plan: dict) -> bool:
    if not ctx.dry_run:
        return False
    click.echo(json.dumps({"stage": stage, "status": "dry-run", "plan": plan}, sort_keys=True, default=str))
    return True


def stage(name: str):
    """Wrap a stage: error reporting with a stage prefix and BLAS thread limits."""

    def deco(fn):
        @functools.wraps(fn)
        @click.pass_obj
        def wrapper(ctx: Ctx, *args, **kw):
            try:
                with threadpool_limits(limits=ctx.threads):
                    if not ctx.dry_run:
                        ctx.stage_dir(name).mkdir(parents=True, exist_ok=True)
                    return fn(ctx, *args, **kw)
            except TgrnError as exc:
                _fail(name, exc.category, str(exc), EXIT_PIPELINE_ERROR)
            except click.exceptions.Exit:
                raise
            except click.ClickException:
                raise
            except Exception as exc:  # noqa: BLE001 - surfaced as a machine-readable error
                log.debug("internal error", exc_info=True)
                _fail(name, "internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL_ERROR)

        return wrapper

    return deco


def _fail(stage_name: str, category: str, message: str, code: int):
    payload = {"status": "error", "stage": stage_name, "category": category, "message": f"{stage_name}: {message}"}
    click.echo(json.dumps(payload, sort_keys=True), err=True)
    sys.exit(code)


def _load_expr(ctx: Ctx, path=None):
    from .ingest import load_expression

    ingested = ctx.stage_dir("ingest") / "matrix.mtx"
    if path is not None:
        p = _require(path, "expression matrix")
        fmt = "matrix-market" if p.suffix == ".mtx" else ctx.cfg.data.expression_format
    elif ingested.is_file():
        p, fmt = ingested, "matrix-market"
    else:
        p, fmt = _require(ctx.cfg.data.expression, "expression matrix"), ctx.cfg.data.expression_format
    return p, load_expression(p, format=fmt)


def _bins_csv(ctx: Ctx, path=None) -> Path:
    return _require(path or _first_existing(ctx.stage_dir("bin") / "pseudotime.csv"), "binned pseudotime CSV")


def _read_bins(expr, bins_path: Path):
    from .errors import DimensionMismatch
    from .trajectory import read_pseudotime_csv

    cells, _, bins = read_pseudotime_csv(bins_path)
    if (bins < 1).any():
        raise DimensionMismatch(f"{bins_path}: some cells have no bin")
    pos = {c: i for i, c in enumerate(cells)}
    missing = [c for c in expr.cells if c not in pos]
    if missing:
        raise DimensionMismatch(f"{len(missing)} cells of the expression matrix have no bin (e.g. {missing[0]})")
    return np.array([bins[pos[c]] for c in expr.cells], dtype=np.int64)


def _bundle_path(ctx: Ctx, path=None) -> Path:
    if path is None:
        built = ctx.stage_dir("bundle")
        path = ctx.cfg.data.bundle or (built if (built / "manifest.json").is_file() else None)
    return _require(path, "graph bundle")


# --------------------------------------------------------------------- root


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="tgrn")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML run configuration (schema: see `tgrn show-config`).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help=f"Output directory; overrides output_dir. Relative paths resolve against ${OUTPUT_ROOT_ENV}.")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker/BLAS threads. 1 is the bit-reproducible mode.")
@click.option("--dry-run", is_flag=True, help="Validate the configuration and print the plan without touching data.")
@click.option("--force", is_flag=True, help="Re-run stages even when their inputs are unchanged.")
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
@click.pass_context
def main(cctx, config_path, out_dir, threads, dry_run, force, verbose):
    """Temporal gene-regulatory-network forecasting pipeline."""
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose + 1, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(config_path)
        if out_dir is not None:
            cfg = cfg.replace(output_dir=out_dir)
    except TgrnError as exc:
        _fail("config", exc.category, str(exc), EXIT_PIPELINE_ERROR)
    cctx.obj = Ctx(cfg, cfg.output_path(), threads, dry_run, force)


@main.command("show-config")
@click.pass_obj
def show_config(ctx: Ctx):
    """Print the effective configuration (defaults merged with the file)."""
    click.echo(dump_config(ctx.cfg), nl=False)


# ------------------------------------------------------------------- stages


@main.command()
@click.option("--expression", type=click.Path(exists=True), default=None, help="Expression matrix file.")
@click.option("--format", "fmt", type=click.Choice(["dense-csv", "matrix-market"]), default=None)
@click.option("--regulators", type=click.Path(exists=True), default=None, help="Regulator symbols, one per line.")
@stage("ingest")
def ingest(ctx: Ctx, expression, fmt, regulators):
    """Validate the expression matrix and store it as Matrix Market."""
    from .ingest import load_expression, load_regulators, save_matrix_market

    src = _require(expression or ctx.cfg.data.expression, "expression matrix")
    fmt = fmt or ctx.cfg.data.expression_format
    regs = regulators or ctx.cfg.data.regulators
    if _dry(ctx, "ingest", {"expression": src, "format": fmt, "regulators": regs}):
        return
    st = _stamp({"expression": src, "regulators": regs}, {"format": fmt})
    d = ctx.stage_dir("ingest")
    if _up_to_date(ctx, "ingest", st, ["matrix.mtx", "genes.tsv", "cells.tsv"]):
        return _skip("ingest", d)
    expr = load_expression(src, format=fmt)
    save_matrix_market(expr, d)
    dec = {"n_genes": expr.n_genes, "n_cells": expr.n_cells, "source": str(src), "format": fmt}
    if regs:
        rl = load_regulators(regs, expr.genes)
        dec.update(n_regulators=len(rl), skipped_regulator_symbols=rl.skipped)
    log.info("ingested %d genes x %d cells", expr.n_genes, expr.n_cells)
    _finish(ctx, "ingest", st, dec)


@main.command()
@click.option("--expression", type=click.Path(exists=True), default=None)
@click.option("--root", default=None, help="Root cell id or index (default: automatic).")
@click.option("--n-pcs", type=int, default=None)
@click.option("--n-neighbors", type=int, default=None)
@click.option("--n-dcs", type=int, default=None)
@stage("pseudotime")
def pseudotime(ctx: Ctx, expression, root, n_pcs, n_neighbors, n_dcs):
    """Diffusion pseudotime for every cell."""
    from .trajectory import DiffusionPseudotime, write_pseudotime_csv

    tp = ctx.cfg.trajectory
    params = {
        "n_pcs": n_pcs or tp.n_pcs,
        "n_neighbors": n_neighbors or tp.n_neighbors,
        "n_dcs": n_dcs or tp.n_dcs,
        "root": root if root is not None else tp.root,
    }
    if _dry(ctx, "pseudotime", {"expression": expression or "ingest output", **params}):
        return
    src, expr = _load_expr(ctx, expression)
    st = _stamp({"expression": src}, params)
    d = ctx.stage_dir("pseudotime")
    if _up_to_date(ctx, "pseudotime", st, ["pseudotime.csv"]):
        return _skip("pseudotime", d)
    root_idx = _resolve_root(params["root"], expr.cells)
    est = DiffusionPseudotime(params["n_pcs"], params["n_neighbors"], params["n_dcs"], root_idx).fit(expr)
    root_cell = expr.cells[est.root_]
    log.info("root cell %s (%s)", root_cell, "auto-selected" if est.root_auto_ else "given")
    write_pseudotime_csv(d / "pseudotime.csv", expr.cells, est.pseudotime_)
    _finish(ctx, "pseudotime", st, {
        "root_cell": root_cell,
        "root_index": int(est.root_),
        "root_auto_selected": bool(est.root_auto_),
        "eigenvalues": [float(v) for v in est.eigenvalues_],
        **params,
    })


def _resolve_root(root, cells):
    if root is None:
        return None
    if isinstance(root, int):
        idx = root
    elif str(root) in cells:
        return list(cells).index(str(root))
    elif str(root).lstrip("-").isdigit():
        idx = int(root)
    else:
        raise ConfigError(f"root {root!r} is neither a cell id nor an index")
    if not 0 <= idx < len(cells):
        raise ConfigError(f"root index {idx} out of range for {len(cells)} cells")
    return idx


@main.command("bin")
@click.option("--pseudotime", "pt_path", type=click.Path(exists=True), default=None)
@click.option("--min-cells", type=int, default=None)
@click.option("--target-bins", type=int, default=None)
@stage("bin")
def bin_(ctx: Ctx, pt_path, min_cells, target_bins):
    """Equal-frequency pseudotime bins (one bin per snapshot)."""
    from .trajectory import bin_cells, read_pseudotime_csv, write_bins_json, write_pseudotime_csv

    params = {
        "min_cells": min_cells or ctx.cfg.binning.min_cells,
        "target_bins": target_bins or ctx.cfg.binning.target_bins,
    }
    src = pt_path or ctx.stage_dir("pseudotime") / "pseudotime.csv"
    if _dry(ctx, "bin", {"pseudotime": src, **params}):
        return
    src = _require(src, "pseudotime CSV")
    st = _stamp({"pseudotime": src}, params)
    d = ctx.stage_dir("bin")
    if _up_to_date(ctx, "bin", st, ["pseudotime.csv", "bins.json"]):
        return _skip("bin", d)
    cells, pt, _ = read_pseudotime_csv(src)
    ba = bin_cells(pt, params["min_cells"], params["target_bins"])
    write_pseudotime_csv(d / "pseudotime.csv", cells, pt, ba.bins)
    root = None
    dec_p = src.parent / "decisions.json"
    if dec_p.is_file():
        root = json.loads(dec_p.read_text()).get("root_cell")
    write_bins_json(d / "bins.json", ba, root, root is None)
    log.info("%d bins, cells per bin %s", ba.T, list(map(int, ba.cells_per_bin)))
    _finish(ctx, "bin", st, {"T": ba.T, "cells_per_bin": [int(c) for c in ba.cells_per_bin], **params})


@main.command("infer-grn")
@click.option("--expression", type=click.Path(exists=True), default=None)
@click.option("--bins", "bins_path", type=click.Path(exists=True), default=None, help="Binned pseudotime CSV.")
@click.option("--regulators", type=click.Path(exists=True), default=None)
@stage("grn")
def infer_grn(ctx: Ctx, expression, bins_path, regulators):
    """Co-expression GRN per bin, written as an edge list."""
    from dataclasses import asdict

    from .grn import infer_coexpression_grn
    from .ingest import EdgeSet, load_regulators, write_grn_edgelists

    regs = regulators or ctx.cfg.data.regulators
    params = asdict(ctx.cfg.grn)
    if _dry(ctx, "infer-grn", {"regulators": regs, "bins": bins_path or "bin output", **params}):
        return
    src, expr = _load_expr(ctx, expression)
    bp = _bins_csv(ctx, bins_path)
    regs = _require(regs, "regulator list")
    st = _stamp({"expression": src, "bins": bp, "regulators": regs}, {"mode": "infer", **params})
    d = ctx.stage_dir("grn")
    if _up_to_date(ctx, "grn", st, ["edges.tsv"]):
        return _skip("grn", d)
    bins = _read_bins(expr, bp)
    rl = load_regulators(regs, expr.genes)
    sets, counts = [], []
    for t in range(1, int(bins.max()) + 1):
        es = infer_coexpression_grn(expr.values[:, np.flatnonzero(bins == t)], rl, ctx.cfg.grn)
        sets.append(EdgeSet(t, es.src, es.dst, es.confidence))
        counts.append(len(es))
        log.info("bin %d: %d edges", t, len(es))
    write_grn_edgelists(d / "edges.tsv", sets, expr.genes)
    _finish(ctx, "grn", st, {"mode": "infer", "edges_per_snapshot": counts,
                             "skipped_regulator_symbols": rl.skipped, **params})


@main.command("import-grn")
@click.option("--edges", type=click.Path(exists=True), default=None,
              help="Edge list: snapshot_index, source_symbol, target_symbol, confidence (tab-separated).")
@click.option("--expression", type=click.Path(exists=True), default=None, help="Defines the gene vocabulary.")
@stage("grn")
def import_grn(ctx: Ctx, edges, expression):
    """Import precomputed per-snapshot GRNs (e.g. from an external regulon tool)."""
    from .ingest import import_grn_edgelists, write_grn_edgelists

    src_edges = edges or ctx.cfg.data.edges
    if _dry(ctx, "import-grn", {"edges": src_edges, "expression": expression or "ingest output"}):
        return
    src_edges = _require(src_edges, "edge list")
    src, expr = _load_expr(ctx, expression)
    st = _stamp({"edges": src_edges, "expression": src}, {"mode": "import"})
    d = ctx.stage_dir("grn")
    if _up_to_date(ctx, "grn", st, ["edges.tsv"]):
        return _skip("grn", d)
    imp = import_grn_edgelists(src_edges, expr.genes)
    write_grn_edgelists(d / "edges.tsv", imp.edge_sets, expr.genes)
    _finish(ctx, "grn", st, {
        "mode": "import",
        "source": str(src_edges),
        "T": len(imp),
        "edges_per_snapshot": [len(e) for e in imp.edge_sets],
        "skipped_unknown_symbols": imp.skipped_unknown,
        "skipped_self_loops": imp.skipped_self_loops,
        "merged_duplicates": imp.merged_duplicates,
    })


@main.command("build-graph")
@click.option("--expression", type=click.Path(exists=True), default=None)
@click.option("--bins", "bins_path", type=click.Path(exists=True), default=None)
@click.option("--edges", type=click.Path(exists=True), default=None, help="Edge list (default: grn stage output).")
@click.option("--embeddings", type=click.Path(exists=True), default=None)
@stage("bundle")
def build_graph(ctx: Ctx, expression, bins_path, edges, embeddings):
    """Combine bins, node features and edge lists into a temporal graph bundle."""
    from .graph import save_bundle
    from .grn import snapshots_from_bins
    from .ingest import import_embeddings, import_grn_edgelists

    emb_p = embeddings or ctx.cfg.data.embeddings
    if _dry(ctx, "build-graph", {"edges": edges or "grn output", "embeddings": emb_p}):
        return
    src, expr = _load_expr(ctx, expression)
    bp = _bins_csv(ctx, bins_path)
    ep = _require(edges or ctx.stage_dir("grn") / "edges.tsv", "edge list")
    st = _stamp({"expression": src, "bins": bp, "edges": ep, "embeddings": emb_p}, {})
    d = ctx.stage_dir("bundle")
    if _up_to_date(ctx, "bundle", st, ["manifest.json"]):
        return _skip("bundle", d)
    bins = _read_bins(expr, bp)
    imp = import_grn_edgelists(ep, expr.genes)
    emb = import_embeddings(emb_p, expr.genes) if emb_p else None
    tg = snapshots_from_bins(expr, bins, imp.edge_sets, emb)
    save_bundle(tg, d)
    dec = {"T": tg.T, "n_genes": tg.n_genes, "d_x": tg.d_x, "total_edges": tg.total_edges()}
    if emb is not None:
        dec.update(embedding_provenance=emb.provenance, embedding_missing_genes=emb.n_missing)
    _finish(ctx, "bundle", st, dec)


@main.command()
@click.option("--bundle", type=click.Path(exists=True, file_okay=False), default=None)
@stage("stats")
def stats(ctx: Ctx, bundle):
    """Snapshot count, edge counts and edge recurrence of a bundle."""
    from .graph import load_bundle, recurrence_stats

    if _dry(ctx, "stats", {"bundle": bundle or ctx.cfg.data.bundle or "bundle output"}):
        return
    bp = _bundle_path(ctx, bundle)
    tg = load_bundle(bp)
    rec = recurrence_stats(tg) if tg.T >= 2 else None
    out = {
        "T": tg.T,
        "n_genes": tg.n_genes,
        "edges_per_snapshot": [s.n_edges for s in tg.snapshots],
        "active_genes_per_snapshot": [int(s.active_mask.sum()) for s in tg.snapshots],
        "average_recurrence": None if rec is None else rec.average,
        "recurrence": [] if rec is None else rec.to_rows(),
    }
    d = ctx.stage_dir("stats")
    (d / "stats.json").write_text(json.dumps(out, sort_keys=True, indent=2) + "\n")
    with open(d / "trend_recurrence.csv", "w") as fh:
        fh.write("snapshot,recurrent_fraction,new_fraction\n")
        for r in out["recurrence"]:
            fh.write(f"{r['snapshot']},{r['recurrent_fraction']!r},{r['new_fraction']!r}\n")
    avg = "n/a" if rec is None else f"{rec.average:.2f}"
    click.echo(f"T={tg.T} genes={tg.n_genes} edges={tg.total_edges()} avg_recurrence={avg}")


def _models_from_flags(ctx: Ctx, families, hidden):
    models = list(ctx.cfg.models)
    if families:
        by_family = {m.family: m for m in models}
        models = [by_family.get(f, ModelConfig(f)) for f in families]
    if hidden is not None:
        from dataclasses import replace

        models = [replace(m, hidden=hidden) for m in models]
    return models


@main.command("run-bench")
@click.option("--bundle", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--family", "families", multiple=True, help="Model family (repeatable); overrides the config list.")
@click.option("--task", "tasks", multiple=True, type=click.Choice(["link", "expression", "centrality"]))
@click.option("--seed", "seeds", multiple=True, type=int, help="Seed (repeatable).")
@click.option("--hidden", type=int, default=None)
@click.option("--warmup-epochs", type=int, default=None)
@click.option("--finetune-epochs", type=int, default=None)
@click.option("--t-warm", type=int, default=None)
@stage("bench")
def run_bench(ctx: Ctx, bundle, families, tasks, seeds, hidden, warmup_epochs, finetune_epochs, t_warm):
    """Live-update benchmark of every model x task x seed; writes the report and plot data."""
    from dataclasses import asdict, replace

    from .bench import build_report, run_benchmark, write_report
    from .bench.runner import bench_jobs
    from .graph import load_bundle

    cfg = ctx.cfg
    over = {k: v for k, v in {"warmup_epochs": warmup_epochs, "finetune_epochs": finetune_epochs,
                              "t_warm": t_warm}.items() if v is not None}
    train = replace(cfg.train, **over)
    models = _models_from_flags(ctx, families, hidden)
    tasks = tuple(tasks) or cfg.tasks
    seeds = tuple(seeds) or cfg.seeds
    cfg = cfg.replace(models=tuple(models), tasks=tasks, seeds=seeds, train=train)
    jobs, skipped = bench_jobs(models, tasks, seeds)
    if _dry(ctx, "run-bench", {"bundle": bundle or cfg.data.bundle or "bundle output", "jobs": len(jobs),
                               "skipped": skipped, "train": asdict(train)}):
        return
    bp = _bundle_path(ctx, bundle)
    params = {"models": [m.to_dict() for m in models], "tasks": list(tasks), "seeds": list(seeds),
              "train": asdict(train), "heatmap_top_n": cfg.heatmap_top_n}
    st = _stamp({"bundle": bp}, params)
    d = ctx.stage_dir("bench")
    if _up_to_date(ctx, "bench", st, ["report.json"]):
        return _skip("bench", d)
    tg = load_bundle(bp)
    fdir = d / "fragments"
    fdir.mkdir(exist_ok=True)

    def save_fragment(f):
        name = f"{f.family}__{f.task}__seed{f.seed}.json"
        payload = f.to_json(with_predictions=f.task == "centrality")
        (fdir / name).write_text(json.dumps(payload, sort_keys=True, allow_nan=False) + "\n")

    frags, skipped = run_benchmark(tg, models, tasks, seeds, train, workers=ctx.threads, on_fragment=save_fragment)
    run_cfg = {**params, "bundle_manifest_sha256": _sha256_path(bp / "manifest.json"), "skipped": skipped}
    report = build_report(frags, tg, run_cfg, top_n=cfg.heatmap_top_n)
    write_report(report, d)
    _finish(ctx, "bench", st, {"n_runs": len(frags), "skipped": skipped})


@main.command()
@click.option("--fragments", "frag_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory of per-run fragment JSON files (default: bench output).")
@click.option("--bundle", type=click.Path(exists=True, file_okay=False), default=None,
              help="Bundle for recurrence plot data and gene names.")
@click.option("--top-n", type=int, default=None, help="Genes in the hub heatmap.")
@stage("report")
def report(ctx: Ctx, frag_dir, bundle, top_n):
    """Re-aggregate saved run fragments into report.json and plot-data CSVs."""
    from .bench import RunFragment, build_report, write_report
    from .graph import load_bundle

    src = Path(frag_dir) if frag_dir else ctx.stage_dir("bench") / "fragments"
    if _dry(ctx, "report", {"fragments": src}):
        return
    src = _require(src, "fragment directory")
    files = sorted(src.glob("*.json"))
    if not files:
        raise ConfigError(f"no fragment files in {src}")
    frags = [RunFragment.from_json(json.loads(p.read_text())) for p in files]
    bp = bundle or _first_existing(ctx.cfg.data.bundle, ctx.stage_dir("bundle"))
    tg = load_bundle(bp) if bp and (Path(bp) / "manifest.json").is_file() else None
    rep = build_report(frags, tg, {"fragments": len(frags)}, top_n=top_n or ctx.cfg.heatmap_top_n)
    write_report(rep, ctx.stage_dir("report"))
    click.echo(json.dumps({"stage": "report", "status": "ok", "output": str(ctx.stage_dir("report"))}))


if __name__ == "__main__":
    main()
