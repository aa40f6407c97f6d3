from .metrics import auprc, precision_at_k, regression_metrics, top_k_ids
from .protocol import PRIMARY_METRIC, TASK_METRICS, RunFragment, TrainParams, live_update_run
from .runner import run_benchmark
from .report import REPORT_SCHEMA_VERSION, aggregate_fragments, build_report, hub_heatmap, write_report

__all__ = [
    "PRIMARY_METRIC", "REPORT_SCHEMA_VERSION", "RunFragment", "TASK_METRICS", "TrainParams",
    "aggregate_fragments", "auprc", "build_report", "hub_heatmap", "live_update_run",
    "precision_at_k", "regression_metrics", "run_benchmark", "top_k_ids", "write_report",
]
