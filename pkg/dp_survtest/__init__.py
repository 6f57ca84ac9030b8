"""
dp-survtest - differentially private hypothesis tests for right-censored survival data.
"""

__version__ = "0.1.0"

from .data_model import (CensoredObservation, SimulationConfig, SurvivalDataset, generate_cox_dataset,
                         generate_hazard_sample, neighboring_dataset, read_dataset_csv, write_dataset_csv)
from .dp_core import BudgetLedger, PrivacyBudget, llr_sensitivity, score_sensitivity, trace_sensitivity
from .dp_tests import (ScoreTestConfig, TestResult, binary_lrt_test, calibrate_threshold_mc,
                       score_test_oracle, score_test_plugin)
from .hazard_estimator import DPHazardCurve, GridCurve, dp_nelson_aalen, nelson_aalen, sup_distance
from .two_sample import ServerConfig, run_one_sample_test, run_two_sample_test, two_sample_threshold
from .harness import ExperimentGrid, ExperimentRunner, ResultRow
from .cli import cli
from .utility import setup_logging

__all__ = [
    'CensoredObservation', 'SimulationConfig', 'SurvivalDataset', 'generate_cox_dataset',
    'generate_hazard_sample', 'neighboring_dataset', 'read_dataset_csv', 'write_dataset_csv',
    'BudgetLedger', 'PrivacyBudget', 'llr_sensitivity', 'score_sensitivity', 'trace_sensitivity',
    'ScoreTestConfig', 'TestResult', 'binary_lrt_test', 'calibrate_threshold_mc',
    'score_test_oracle', 'score_test_plugin',
    'DPHazardCurve', 'GridCurve', 'dp_nelson_aalen', 'nelson_aalen', 'sup_distance',
    'ServerConfig', 'run_one_sample_test', 'run_two_sample_test', 'two_sample_threshold',
    'ExperimentGrid', 'ExperimentRunner', 'ResultRow', 'cli', 'setup_logging',
]
