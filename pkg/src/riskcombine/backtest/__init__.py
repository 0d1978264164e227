"""Rolling-window backtests, calibration tests and forecast evaluation."""

from .calibration import (SingularRegressors, TestResult, cc_test, dq_test, es_bootstrap_test,
                          independence_lr, uc_lr, uc_test)
from .evaluate import (average_ranks, evaluate, evaluate_report, format_tables, load_path,
                       save_path, save_report, skill_scores, write_summary)
from .mcs import McsResult, block_bootstrap_counts, mcs, mcs_pvalues
from .run import (DYNAMIC_SELECTION, BacktestConfig, BacktestReport, ForecastPath,
                  benchmark_path, dynamic_selection, grand_average_path, hs_benchmark,
                  run_backtest)
