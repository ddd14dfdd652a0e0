"""Leave-one-subject-out evaluation harness."""
from .harness import (
    FoldAudit,
    FoldJob,
    default_jobs,
    fold_seed,
    run_fold,
    run_loso,
    scheme_pool,
    sweep_calibration,
    sweep_sources,
    take_calibration,
)
from .report import CSV_COLUMNS, Cell, EvaluationReport, FoldError, emit_report, format_report, read_cells, write_run_manifest
from .stats import WilcoxonResult, wilcoxon_signed_rank
from .tasks import ABLATIONS, MAIN_SCHEMES, TASK_NAMES, SchemeId, TaskData, TaskSpec, parse_schemes, table_one_task

__all__ = [
    "ABLATIONS", "CSV_COLUMNS", "Cell", "EvaluationReport", "FoldAudit", "FoldError", "FoldJob", "MAIN_SCHEMES",
    "SchemeId", "TASK_NAMES", "TaskData", "TaskSpec", "WilcoxonResult", "default_jobs", "emit_report", "fold_seed",
    "format_report", "parse_schemes", "read_cells", "run_fold", "run_loso", "scheme_pool", "sweep_calibration",
    "sweep_sources", "table_one_task", "take_calibration", "wilcoxon_signed_rank", "write_run_manifest",
]
