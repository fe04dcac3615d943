"""
Quality control and normalization of raw count matrices.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from scripts.errors import EmptyResultError, ValidationError
from .matrix import CellRecord, SparseExpressionMatrix, Stage

logger = logging.getLogger(__name__)

DEFAULT_MIN_GENES = 200
DEFAULT_TARGET_SUM = 10000.0


def quality_filter(matrix: SparseExpressionMatrix,
                   min_genes: int = DEFAULT_MIN_GENES) -> SparseExpressionMatrix:
    """
    Drops cells with fewer than `min_genes` expressed genes.

    Args:
        matrix: Raw count matrix
        min_genes: Minimum number of non-zero entries a cell must have

    Returns:
        Matrix with the surviving cells, cell indices re-densified
    """
    if matrix.stage != Stage.RAW_COUNTS:
        raise ValidationError("quality_filter expects a raw_counts matrix")

    keep = np.flatnonzero(matrix.nonzeros_per_cell() >= min_genes)
    if keep.size == 0:
        raise EmptyResultError(
            f"All {matrix.n_cells} cells have fewer than {min_genes} expressed genes"
        )
    if keep.size == matrix.n_cells:
        return matrix

    logger.info("Quality filter: kept %d/%d cells (min_genes=%d)",
                keep.size, matrix.n_cells, min_genes)
    return matrix.subset_cells(keep)


def kept_cell_indices(matrix: SparseExpressionMatrix, min_genes: int = DEFAULT_MIN_GENES) -> np.ndarray:
    """Indices of the cells quality_filter would keep (for carrying labels along)."""
    return np.flatnonzero(matrix.nonzeros_per_cell() >= min_genes)


def normalize(matrix: SparseExpressionMatrix,
              target_sum: float = DEFAULT_TARGET_SUM) -> SparseExpressionMatrix:
    """
    Library-size normalization followed by log(1 + x).

    Each cell is scaled to sum to `target_sum`; the sparsity pattern is unchanged.
    """
    if matrix.stage != Stage.RAW_COUNTS:
        raise ValidationError("normalize expects a raw_counts matrix")
    if target_sum <= 0:
        raise ValidationError(f"target_sum must be positive, got {target_sum}")

    library = matrix.library_sizes()
    empty = np.flatnonzero(library <= 0)
    if empty.size:
        raise ValidationError(f"Cell {int(empty[0])} has zero library size")

    scaled = scale_to_target(matrix, target_sum)
    csr = scaled.copy()
    csr.data = np.log1p(csr.data)
    return SparseExpressionMatrix.from_csr(csr, Stage.NORMALIZED)


def scale_to_target(matrix: SparseExpressionMatrix, target_sum: float) -> sp.csr_matrix:
    """Per-cell scaling step of normalize, before the log transform."""
    csr = matrix.to_csr().astype(np.float64)
    factors = target_sum / matrix.library_sizes()
    return sp.csr_matrix(sp.diags(factors) @ csr)


def cell_records(matrix: SparseExpressionMatrix,
                 cell_ids: Optional[Sequence[str]] = None,
                 labels: Optional[Sequence[str]] = None) -> List[CellRecord]:
    """Builds per-cell metadata from a raw count matrix."""
    if matrix.stage != Stage.RAW_COUNTS:
        raise ValidationError("library sizes are only defined on raw counts")
    if cell_ids is None:
        cell_ids = [f"cell_{i}" for i in range(matrix.n_cells)]
    library = matrix.library_sizes()
    return [
        CellRecord(
            cell_id=str(cell_ids[i]),
            library_size=float(library[i]),
            label=None if labels is None else str(labels[i]),
        )
        for i in range(matrix.n_cells)
    ]
