from robustlab.harness.config import ExperimentConfig, dumps_config, load_config, parse_config
from robustlab.harness.plot import emit_plot, load_series, render_svg
from robustlab.harness.runner import evaluate_run, read_aggregate, read_manifest, run_experiment, verify_manifest
from robustlab.harness.views import compare_runtime, show_policy

__all__ = [
    "ExperimentConfig",
    "compare_runtime",
    "dumps_config",
    "emit_plot",
    "evaluate_run",
    "load_config",
    "load_series",
    "parse_config",
    "read_aggregate",
    "read_manifest",
    "render_svg",
    "run_experiment",
    "show_policy",
    "verify_manifest",
]
