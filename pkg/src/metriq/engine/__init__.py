"""Local analysis engine: datasets, the plan interpreter, the brute-force
oracle, scorecard assembly, and the embedded SQL adapter."""

from .adapter import ResultTable, SqliteAdapter, run_emitted
from .data import Dataset, load_dataset, load_manifest
from .interp import execute_plan
from .oracle import brute_force_oracle
from .scorecard import Scorecard, ScorecardRow, cells_from_result_table, scorecard_from_cells

__all__ = [
    "Dataset",
    "ResultTable",
    "Scorecard",
    "ScorecardRow",
    "SqliteAdapter",
    "brute_force_oracle",
    "cells_from_result_table",
    "execute_plan",
    "load_dataset",
    "load_manifest",
    "run_emitted",
    "scorecard_from_cells",
]
