from .bench import (
    ABLATIONS,
    BENCH_COLUMNS,
    BLOCKWISE,
    DENSE,
    FROZEN,
    PRUNED,
    UNIFORM,
    BenchmarkRow,
    bench_compare,
    bench_frame,
    flag_ablations,
    format_bench_table,
    frozen_mask_from_pruner,
    write_bench,
)
from .heatmaps import format_graymap, gray_levels, write_graymap, write_heatmap, write_matrix_csv
from .leave_one_out import LeaveOneOutGrid, leave_one_out, write_leave_one_out
from .runners import DensePolicy, PrunedPolicy, SchedulePolicy
from .similarity import (
    ActivationCapture,
    SimilarityReport,
    adjacent_mean,
    capture_activations,
    cosine_similarity_matrix,
    similarity_report,
    write_similarity_report,
)
from .sparsity import RATE_TRACE_COLUMNS, RateTrace, block_labels, rate_trace, sparsity_dump

__all__ = [
    'ABLATIONS',
    'BENCH_COLUMNS',
    'BLOCKWISE',
    'DENSE',
    'FROZEN',
    'PRUNED',
    'RATE_TRACE_COLUMNS',
    'UNIFORM',
    'ActivationCapture',
    'BenchmarkRow',
    'DensePolicy',
    'LeaveOneOutGrid',
    'PrunedPolicy',
    'RateTrace',
    'SchedulePolicy',
    'SimilarityReport',
    'adjacent_mean',
    'bench_compare',
    'bench_frame',
    'block_labels',
    'capture_activations',
    'cosine_similarity_matrix',
    'flag_ablations',
    'format_bench_table',
    'format_graymap',
    'frozen_mask_from_pruner',
    'gray_levels',
    'leave_one_out',
    'rate_trace',
    'similarity_report',
    'sparsity_dump',
    'write_bench',
    'write_graymap',
    'write_heatmap',
    'write_leave_one_out',
    'write_matrix_csv',
    'write_similarity_report',
]
