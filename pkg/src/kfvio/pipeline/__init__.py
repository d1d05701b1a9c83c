"""Orchestration, configuration, evaluation and the memory/op-count model."""

from .config import ADAPTATION, KeyframePolicy, PipelineConfig, preset
from .evaluate import TrajectoryError, evaluate_trajectory, umeyama
from .model import backend_macs, format_report, model_report
from .runner import Pipeline, RunReport, StateRecord, open_dataset, run_sequence, write_outputs
from .sweep import btc_roundtrip, sweep_compression, write_sweep_csv

__all__ = [
    "ADAPTATION", "KeyframePolicy", "Pipeline", "PipelineConfig", "RunReport", "StateRecord",
    "TrajectoryError", "backend_macs", "btc_roundtrip", "evaluate_trajectory", "format_report",
    "model_report", "open_dataset", "preset", "run_sequence", "sweep_compression", "umeyama",
    "write_outputs", "write_sweep_csv",
]
