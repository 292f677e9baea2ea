"""Experiment driver: configs, stages, metrics and plots."""
from latentcond.harness.config import ExperimentConfig, dump_config, from_dict, load_config, resolve, to_dict
from latentcond.harness.experiment import gradient_fidelity, init_speedup, run_experiment, run_stages
from latentcond.harness.metrics import MetricsReport, compute_metrics, read_metrics
from latentcond.harness.plots import emit_plots

__all__ = [
    "ExperimentConfig", "MetricsReport", "compute_metrics", "dump_config", "emit_plots", "from_dict",
    "gradient_fidelity", "init_speedup", "load_config", "read_metrics", "resolve", "run_experiment",
    "run_stages", "to_dict",
]
