"""Run every (model, task, seed) job of a benchmark, optionally seed-parallel."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor

from threadpoolctl import threadpool_limits

from ..graph import TemporalGraph
from ..models import ModelConfig
from .protocol import RunFragment, TrainParams, live_update_run

log = logging.getLogger(__name__)


def supported(family: str, task: str) -> bool:
    return family != "edgebank" or task == "link"


def bench_jobs(models, tasks, seeds):
    jobs, skipped = [], []
    for m in models:
        for task in tasks:
            if not supported(m.family, task):
                skipped.append({"family": m.family, "task": task, "reason": "edgebank supports the link task only"})
                continue
            for seed in seeds:
                jobs.append((m, task, int(seed)))
    return jobs, skipped


def _run_one(args) -> RunFragment:
    tg, cfg, task, params, seed = args
    with threadpool_limits(limits=1):
        frag = live_update_run(tg, cfg, task, params, seed)
    log.info("finished %s/%s seed %d", cfg.family, task, seed)
    return frag


def run_benchmark(tg: TemporalGraph, models: list[ModelConfig], tasks, seeds, params: TrainParams,
                  workers: int = 1, on_fragment=None):
    """Returns ``(fragments, skipped)``; fragments come back in job order regardless of ``workers``."""
    jobs, skipped = bench_jobs(models, tasks, seeds)
    for s in skipped:
        log.info("skipping %s/%s: %s", s["family"], s["task"], s["reason"])
    args = [(tg, m, task, params, seed) for m, task, seed in jobs]
    frags = []
    if workers <= 1 or len(args) <= 1:
        for a in args:
            f = _run_one(a)
            if on_fragment:
                on_fragment(f)
            frags.append(f)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for f in pool.map(_run_one, args):
                if on_fragment:
                    on_fragment(f)
                frags.append(f)
    return frags, skipped
