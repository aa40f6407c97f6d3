"""Live-update evaluation: predict the next snapshot, then fine-tune on it."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DegenerateLabels, NoNegativesAvailable, NumericalError, TooFewSnapshots
from ..graph import TemporalGraph
from ..models import ModelConfig, TemporalGraphForecaster
from ..seeding import derive_seed
from ..tasks import TASKS, centrality_target, expression_target, link_candidates
from .metrics import auprc, precision_at_k, regression_metrics

log = logging.getLogger(__name__)

TASK_METRICS = {
    "link": ("auprc",),
    "expression": ("pcc", "precision_up", "precision_down", "spearman", "mae"),
    "centrality": ("mae", "spearman", "precision_top", "pcc"),
}
PRIMARY_METRIC = {"link": "auprc", "expression": "pcc", "centrality": "spearman"}


@dataclass(frozen=True)
class TrainParams:
    lr: float = 1e-3
    warmup_epochs: int = 100
    finetune_epochs: int = 20
    t_warm: int = 2
    neg_ratio: float = 1.0
    top_k: int = 200
    max_train_pairs: int = 20000

    def __post_init__(self):
        if self.t_warm < 2:
            raise ConfigError("t_warm must be >= 2")
        if self.neg_ratio <= 0 or self.top_k < 1 or self.lr <= 0:
            raise ConfigError("neg_ratio, lr must be > 0 and top_k >= 1")
        if self.warmup_epochs < 0 or self.finetune_epochs < 0:
            raise ConfigError("epochs must be >= 0")


def graph_digest(tg: TemporalGraph) -> str:
    h = hashlib.sha256()
    h.update("\n".join(tg.vocab.symbols).encode())
    for s in tg.snapshots:
        for a in (s.src, s.dst, s.confidence, s.node_features):
            h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def config_hash(cfg: ModelConfig, task: str, params: TrainParams, digest: str = "") -> str:
    payload = {"model": cfg.to_dict(), "task": task, "train": asdict(params), "data": digest}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunFragment:
    """Per-seed result of one (model, task) live-update run."""

    family: str
    task: str
    seed: int
    config: dict
    config_hash: str
    steps: list = field(default_factory=list)
    predictions: list = field(default_factory=list, repr=False)

    def metric_matrix(self, metric: str) -> np.ndarray:
        return np.array([_nan(s["metrics"].get(metric)) for s in self.steps], dtype=np.float64)

    def to_json(self, with_predictions: bool = False) -> dict:
        out = {
            "family": self.family,
            "task": self.task,
            "seed": self.seed,
            "config": self.config,
            "config_hash": self.config_hash,
            "steps": [
                {**s, "metrics": {k: _finite_or_none(v) for k, v in s["metrics"].items()}} for s in self.steps
            ],
        }
        if with_predictions:
            out["predictions"] = [None if p is None else [float(v) for v in p] for p in self.predictions]
        return out

    @classmethod
    def from_json(cls, d: dict) -> "RunFragment":
        steps = [{**s, "metrics": {k: _nan(v) for k, v in s["metrics"].items()}} for s in d["steps"]]
        preds = [None if p is None else np.asarray(p, dtype=np.float64) for p in d.get("predictions", [])]
        return cls(d["family"], d["task"], int(d["seed"]), d["config"], d["config_hash"], steps, preds)


def _nan(v):
    return float("nan") if v is None else float(v)


def _finite_or_none(v):
    return None if v is None or not np.isfinite(v) else float(v)


def _nan_metrics(task):
    return {m: float("nan") for m in TASK_METRICS[task]}


def evaluate_step(est: TemporalGraphForecaster, tg: TemporalGraph, t: int, task: str, params: TrainParams, seed: int):
    """Metrics for forecasting snapshot ``t+1``; also returns the raw node predictions."""
    nxt = tg[t + 1]
    if task == "link":
        try:
            pairs, labels = link_candidates(nxt, params.neg_ratio, derive_seed(seed, "eval-negatives", t))
        except NoNegativesAvailable:
            return _nan_metrics(task), None
        scores = est.predict(tg, t, pairs)
        try:
            return {"auprc": auprc(scores, labels)}, None
        except DegenerateLabels:
            return _nan_metrics(task), None
    pred = est.predict(tg, t)
    if task == "expression":
        genes, target = expression_target(tg[t], nxt)
        if len(genes) < 2:
            return _nan_metrics(task), pred
        p = pred[genes]
        reg = regression_metrics(p, target)
        return {
            "pcc": reg["pcc"],
            "precision_up": precision_at_k(p, target, params.top_k, "up"),
            "precision_down": precision_at_k(p, target, params.top_k, "down"),
            "spearman": reg["spearman"],
            "mae": reg["mae"],
        }, pred
    genes, target = centrality_target(nxt)
    p = np.clip(pred, 0.0, 1.0)
    reg = regression_metrics(p, target)
    return {
        "mae": reg["mae"],
        "spearman": reg["spearman"],
        "precision_top": precision_at_k(p, target, params.top_k, "top"),
        "pcc": reg["pcc"],
    }, p


def live_update_run(
    tg: TemporalGraph,
    model_config: ModelConfig,
    task: str,
    train_params: TrainParams = TrainParams(),
    seed: int = 0,
) -> RunFragment:
    """Warm up on snapshots ``1..t_warm``; then for t = t_warm..T-1 predict t+1 and fine-tune on it."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    p = train_params
    if tg.T < p.t_warm + 1:
        raise TooFewSnapshots(f"live update needs T >= {p.t_warm + 1}, got {tg.T}")
    est = TemporalGraphForecaster(
        family=model_config.family,
        task=task,
        hidden=model_config.hidden,
        layers=model_config.layers,
        cheb_k=model_config.cheb_k,
        heads=model_config.heads,
        dropout=model_config.dropout,
        decoder=model_config.decoder,
        lr=p.lr,
        warmup_epochs=p.warmup_epochs,
        finetune_epochs=p.finetune_epochs,
        neg_ratio=p.neg_ratio,
        max_train_pairs=p.max_train_pairs,
        random_state=derive_seed(seed, "model", model_config.family),
    )
    frag = RunFragment(
        family=model_config.family,
        task=task,
        seed=int(seed),
        config={"model": model_config.to_dict(), "train": asdict(p)},
        config_hash=config_hash(model_config, task, p, graph_digest(tg)),
    )
    est.fit(tg, until=p.t_warm)
    for step, t in enumerate(range(p.t_warm, tg.T), start=1):
        status = "ok"
        try:
            metrics, pred = evaluate_step(est, tg, t, task, p, seed)
        except NumericalError:
            log.warning("%s/%s seed %d: numerical failure predicting snapshot %d", model_config.family, task, seed, t + 1)
            metrics, pred, status = _nan_metrics(task), None, "diverged_eval"
        frag.predictions.append(pred)
        try:
            est.partial_fit(tg, t)
        except NumericalError:
            log.warning("%s/%s seed %d: fine-tune diverged at %d; weights restored", model_config.family, task, seed, t)
            status = "diverged_train" if status == "ok" else status
        frag.steps.append({"step": step, "t": t, "target_snapshot": t + 1, "status": status, "metrics": metrics})
    return frag
