import pytest
import yaml

from tgrn.config import OUTPUT_ROOT_ENV, RunConfig, config_from_dict, dump_config, load_config
from tgrn.errors import ConfigError
from tgrn.models import FAMILIES


def test_defaults():
    cfg = RunConfig()
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert [m.family for m in cfg.models] == list(FAMILIES)
    assert cfg.train.warmup_epochs == 100 and cfg.train.finetune_epochs == 20 and cfg.train.t_warm == 2
    assert cfg.binning.min_cells == 300 and cfg.trajectory.n_neighbors == 15


def test_round_trip_through_yaml(tmp_path):
    cfg = config_from_dict({"models": ["gcn", {"family": "gat", "hidden": 8, "heads": 2}], "seeds": [3],
                            "train": {"lr": 0.01}, "tasks": "link"})
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    again = load_config(p)
    assert again.models == cfg.models and again.seeds == (3,) and again.tasks == ("link",)
    assert again.train.lr == 0.01


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"train": {"epochs": 3}},
    {"models": [{"family": "gcn", "width": 3}]},
    {"models": ["transformer"]},
    {"tasks": ["weather"]},
    {"seeds": [1, 1]},
    {"seeds": "zero"},
    {"train": {"t_warm": 1}},
    {"grn": {"corr": "kendall"}},
    {"binning": {"min_cells": 0}},
    {"data": {"expression_format": "h5ad"}},
    {"trajectory": "fast"},
])
def test_invalid_configs_rejected(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_relative_paths_resolve_against_config_dir(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"data": {"expression": "x.csv", "bundle": "/abs/b"}}))
    cfg = load_config(p)
    assert cfg.data.expression == str(tmp_path / "x.csv") and cfg.data.bundle == "/abs/b"


def test_bad_yaml_and_missing_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_output_root_env(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert RunConfig(output_dir="run1").output_path() == tmp_path / "run1"
    assert RunConfig(output_dir="/elsewhere").output_path().as_posix() == "/elsewhere"
    monkeypatch.delenv(OUTPUT_ROOT_ENV)
    assert RunConfig(output_dir="run1").output_path().as_posix() == "run1"
