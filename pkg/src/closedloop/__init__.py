# -*- coding: utf-8 -*-
"""
Closed-loop simulation, safety reports and run logs
"""

from .harness import ClosedLoopConfig, ClosedLoopLog, StepRecord, run_closed_loop
from .report import RunComparison, SafetyReport, compare_runs, safety_report, settled, tail_state_norm
from .log_io import RUN_COLUMNS, read_run_csv, write_run_csv, write_summary_json

__all__ = [
    'ClosedLoopConfig',
    'ClosedLoopLog',
    'StepRecord',
    'run_closed_loop',
    'RunComparison',
    'SafetyReport',
    'compare_runs',
    'safety_report',
    'settled',
    'tail_state_norm',
    'RUN_COLUMNS',
    'read_run_csv',
    'write_run_csv',
    'write_summary_json',
]
