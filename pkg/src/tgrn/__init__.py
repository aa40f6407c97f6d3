"""Temporal gene-regulatory-network forecasting toolkit."""

from .errors import TgrnError
from .graph import GeneVocab, Snapshot, TemporalGraph, build_temporal_graph, load_bundle, make_snapshot, save_bundle

__version__ = "0.1.0"

__all__ = [
    "GeneVocab", "Snapshot", "TemporalGraph", "TgrnError", "build_temporal_graph",
    "load_bundle", "make_snapshot", "save_bundle",
]
