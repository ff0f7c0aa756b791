"""Benchmark harness for the block preconditioners."""
from fddlm.bench.experiment import (CASES, CSV_FIELDS, SHAPES, TIMING_FIELDS, Case,
                                    ExperimentCase, ResultRow, SolverSettings,
                                    experiment_cases, level_pairs, run_case, run_matrix)
from fddlm.bench.report import emit_csv, emit_plots, read_csv

__all__ = ["CASES", "CSV_FIELDS", "SHAPES", "TIMING_FIELDS", "Case", "ExperimentCase",
           "ResultRow", "SolverSettings", "emit_csv", "emit_plots", "experiment_cases",
           "level_pairs", "read_csv", "run_case", "run_matrix"]
