"""Run configuration: one YAML file, validated before anything runs.

Schema (every key optional; defaults shown)::

    data:
      expression: null            # genes x cells CSV, or matrix.mtx with genes.tsv/cells.tsv beside it
      expression_format: dense-csv   # dense-csv | matrix-market
      regulators: null            # one TF symbol per line (needed by infer-grn)
      edges: null                 # precomputed edge list (import-grn)
      embeddings: null            # gene-keyed CSV appended to node features
      bundle: null                # prebuilt temporal graph bundle (run-bench input)
    trajectory: {n_pcs: 50, n_neighbors: 15, n_dcs: 10, root: null}
    binning: {min_cells: 300, target_bins: 12}
    grn: {corr: spearman, min_abs_corr: 0.3, top_k_per_tf: 50, min_cells_expressed: 10}
    models:                       # list of model configs
      - {family: gcrn-gru, hidden: 64, layers: 2, cheb_k: 3, heads: 4, dropout: 0.1, decoder: dot}
    tasks: [link, expression, centrality]
    train: {lr: 0.001, warmup_epochs: 100, finetune_epochs: 20, t_warm: 2,
            neg_ratio: 1.0, top_k: 200, max_train_pairs: 20000}
    seeds: [0, 1, 2, 3, 4]
    heatmap_top_n: 20
    output_dir: tgrn-out

Relative ``output_dir`` values resolve against ``$TGRN_OUTPUT_ROOT`` when set.
Relative data paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bench.protocol import TrainParams
from .errors import ConfigError
from .grn import GrnParams
from .models import FAMILIES, ModelConfig
from .tasks import TASKS

OUTPUT_ROOT_ENV = "TGRN_OUTPUT_ROOT"


@dataclass(frozen=True)
class DataPaths:
    expression: str | None = None
    expression_format: str = "dense-csv"
    regulators: str | None = None
    edges: str | None = None
    embeddings: str | None = None
    bundle: str | None = None

    def __post_init__(self):
        if self.expression_format not in ("dense-csv", "matrix-market"):
            raise ConfigError(f"unknown expression_format {self.expression_format!r}")


@dataclass(frozen=True)
class TrajectoryParams:
    n_pcs: int = 50
    n_neighbors: int = 15
    n_dcs: int = 10
    root: str | int | None = None

    def __post_init__(self):
        if min(self.n_pcs, self.n_neighbors, self.n_dcs) < 1:
            raise ConfigError("trajectory n_pcs, n_neighbors and n_dcs must be >= 1")


@dataclass(frozen=True)
class BinningParams:
    min_cells: int = 300
    target_bins: int = 12

    def __post_init__(self):
        if self.min_cells < 1 or self.target_bins < 1:
            raise ConfigError("min_cells and target_bins must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    data: DataPaths = field(default_factory=DataPaths)
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    binning: BinningParams = field(default_factory=BinningParams)
    grn: GrnParams = field(default_factory=GrnParams)
    models: tuple = tuple(ModelConfig(f) for f in FAMILIES)
    tasks: tuple = TASKS
    train: TrainParams = field(default_factory=TrainParams)
    seeds: tuple = (0, 1, 2, 3, 4)
    heatmap_top_n: int = 20
    output_dir: str = "tgrn-out"

    def __post_init__(self):
        bad = [t for t in self.tasks if t not in TASKS]
        if bad or not self.tasks:
            raise ConfigError(f"tasks must be a non-empty subset of {TASKS}, got {list(self.tasks)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds {list(self.seeds)}")
        if not self.models:
            raise ConfigError("at least one model is required")
        if self.heatmap_top_n < 1:
            raise ConfigError("heatmap_top_n must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["models"] = [m.to_dict() for m in self.models]
        d["tasks"] = list(self.tasks)
        d["seeds"] = list(self.seeds)
        return d

    def output_path(self) -> Path:
        p = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        return p if p.is_absolute() or not root else Path(root) / p

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def _build(cls, raw, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; allowed {sorted(names)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _int_list(raw, where):
    if isinstance(raw, int):
        raw = [raw]
    if not isinstance(raw, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
        raise ConfigError(f"{where}: expected a list of integers")
    return tuple(raw)


def config_from_dict(raw: dict | None, base_dir: str | os.PathLike | None = None) -> RunConfig:
    raw = dict(raw or {})
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}; allowed {sorted(names)}")
    kw = {}
    data = _build(DataPaths, raw.get("data"), "data")
    if base_dir is not None:
        fix = {}
        for f in ("expression", "regulators", "edges", "embeddings", "bundle"):
            v = getattr(data, f)
            if v and not Path(v).is_absolute():
                fix[f] = str(Path(base_dir) / v)
        data = dataclasses.replace(data, **fix)
    kw["data"] = data
    kw["trajectory"] = _build(TrajectoryParams, raw.get("trajectory"), "trajectory")
    kw["binning"] = _build(BinningParams, raw.get("binning"), "binning")
    kw["grn"] = _build(GrnParams, raw.get("grn"), "grn")
    kw["train"] = _build(TrainParams, raw.get("train"), "train")
    if "models" in raw:
        models = raw["models"]
        if not isinstance(models, list):
            raise ConfigError("models: expected a list")
        kw["models"] = tuple(
            _build(ModelConfig, {"family": m} if isinstance(m, str) else m, f"models[{i}]")
            for i, m in enumerate(models)
        )
    if "tasks" in raw:
        tasks = raw["tasks"]
        kw["tasks"] = tuple([tasks] if isinstance(tasks, str) else tasks)
    if "seeds" in raw:
        kw["seeds"] = _int_list(raw["seeds"], "seeds")
    for k in ("heatmap_top_n", "output_dir"):
        if k in raw:
            kw[k] = raw[k]
    return RunConfig(**kw)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return config_from_dict(raw, p.parent)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
