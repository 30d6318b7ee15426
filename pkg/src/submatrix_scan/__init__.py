"""Distribution-free detection of an elevated submatrix.

Scan statistics calibrated by permutation (within rows or across the whole
matrix), rank-based scans with reusable null tables, parametric Monte Carlo
calibration for benchmarking, and a simulation harness.
"""

__version__ = "0.1.0"

from .calibration import (
    Estimator,
    Scheme,
    ScanStatistic,
    TestOutcome,
    oracle_pvalue_mc,
    permutation_pvalue_exact,
    permutation_pvalue_mc,
    sample_permutation,
)
from .model import AnomalySpec, Family, FamilySpec, generate_matrix, read_matrix_csv, sample_entry
from .ranks import NullTable, RankMatrix, build_null_table, rank_scan, rank_test, rank_transform
from .scan import (
    ScanResult,
    SubmatrixIndex,
    scan_exact,
    scan_grid_bonferroni,
    scan_hillclimb,
    sum_statistic,
)
from .theory import regime_report, scan_condition_lhs, theta_crit, upsilon

__all__ = [
    "AnomalySpec", "Estimator", "Family", "FamilySpec", "NullTable", "RankMatrix", "ScanResult",
    "ScanStatistic", "Scheme", "SubmatrixIndex", "TestOutcome", "build_null_table", "generate_matrix",
    "oracle_pvalue_mc", "permutation_pvalue_exact", "permutation_pvalue_mc", "rank_scan", "rank_test",
    "rank_transform", "read_matrix_csv", "regime_report", "sample_entry", "sample_permutation",
    "scan_condition_lhs", "scan_exact", "scan_grid_bonferroni", "scan_hillclimb", "sum_statistic",
    "theta_crit", "upsilon",
]
