"""Expression matrix ingestion, preprocessing and synthetic data."""

from .matrix import (
    REFERENCE_GENE_COUNT,
    CellRecord,
    CellRow,
    SparseExpressionMatrix,
    Stage,
    load_labels,
    load_matrix,
    save_labels,
    save_matrix,
)
from .preprocessing import (
    DEFAULT_MIN_GENES,
    DEFAULT_TARGET_SUM,
    cell_records,
    kept_cell_indices,
    normalize,
    quality_filter,
    scale_to_target,
)
from .synthetic import SyntheticSpec, synthesize_dataset

__all__ = [
    'REFERENCE_GENE_COUNT', 'CellRecord', 'CellRow', 'SparseExpressionMatrix', 'Stage',
    'load_labels', 'load_matrix', 'save_labels', 'save_matrix',
    'DEFAULT_MIN_GENES', 'DEFAULT_TARGET_SUM', 'cell_records', 'kept_cell_indices',
    'normalize', 'quality_filter', 'scale_to_target',
    'SyntheticSpec', 'synthesize_dataset',
]
