"""Experiment plans, orchestration, CSV output and the command line."""

from .output import FitReport, emit_csv, fit_report, linear_fit, read_csv, write_series_csv, write_summary_csv
from .plans import NAMED_PLANS, ExperimentPlan, load_plan, named_plan
from .runner import RunRecord, run_experiment, run_point, worker_count

__all__ = [name for name in dir() if not name.startswith("_")]
