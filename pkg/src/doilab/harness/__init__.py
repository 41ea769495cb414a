"""Seeded experiment runner and report persistence."""

from .cli import cli_main
from .config import ExperimentConfig, build_config
from .experiments import (
    RUNNERS,
    run_appendix_positive,
    run_convergence,
    run_counterexample,
    run_doi_identities,
    run_kernel_report,
    run_main_estimate,
    run_ssf_continuity,
)
from .report import Report, TrialRecord

__all__ = [
    "RUNNERS",
    "ExperimentConfig",
    "Report",
    "TrialRecord",
    "build_config",
    "cli_main",
    "run_appendix_positive",
    "run_convergence",
    "run_counterexample",
    "run_doi_identities",
    "run_kernel_report",
    "run_main_estimate",
    "run_ssf_continuity",
]
