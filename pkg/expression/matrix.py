"""
Sparse cells x genes expression matrix in coordinate (triplet) form, plus
its text interchange format.

Coordinate text format:
    first line  : n_cells n_genes n_entries
    other lines : cell_index gene_index value   (0-based, '.' decimal separator)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from scripts.errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

# Reference gene list length used by the large presets
REFERENCE_GENE_COUNT = 19264


class Stage(str, Enum):
    RAW_COUNTS = 'raw_counts'
    NORMALIZED = 'normalized'


@dataclass(frozen=True, eq=False)
class CellRow:
    """One cell as sorted non-zero gene indices and their values."""

    cell_index: int
    n_genes: int
    gene_indices: np.ndarray
    values: np.ndarray

    @property
    def n_nonzero(self) -> int:
        return int(self.gene_indices.size)

    @property
    def n_zero(self) -> int:
        return self.n_genes - self.n_nonzero

    def dense(self) -> np.ndarray:
        out = np.zeros(self.n_genes, dtype=np.float64)
        out[self.gene_indices] = self.values
        return out

    def zero_positions(self) -> np.ndarray:
        is_zero = np.ones(self.n_genes, dtype=bool)
        is_zero[self.gene_indices] = False
        return np.flatnonzero(is_zero)

    @classmethod
    def from_dense(cls, values: Sequence[float], cell_index: int = 0) -> 'CellRow':
        dense = np.asarray(values, dtype=np.float64)
        genes = np.flatnonzero(dense)
        return cls(cell_index, int(dense.size), genes, dense[genes])


@dataclass(frozen=True)
class CellRecord:
    """Per-cell metadata kept next to the matrix."""

    cell_id: str
    library_size: float
    label: Optional[str] = None


@dataclass(frozen=True, eq=False)
class SparseExpressionMatrix:
    """
    Cells x genes matrix with implicit zeros.

    Entries are kept sorted by (cell, gene). Construction validates every
    invariant, so an instance that exists is a valid matrix.
    """

    n_cells: int
    n_genes: int
    cells: np.ndarray
    genes: np.ndarray
    values: np.ndarray
    stage: Stage = Stage.RAW_COUNTS
    _csr: Optional[sp.csr_matrix] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).ravel()
        genes = np.asarray(self.genes, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        stage = Stage(self.stage)

        if self.n_cells < 0 or self.n_genes < 0:
            raise ValidationError("Matrix dimensions must be non-negative")
        if not (cells.size == genes.size == values.size):
            raise ValidationError("cells, genes and values must have the same length")
        if cells.size:
            if cells.min() < 0 or cells.max() >= self.n_cells:
                raise ValidationError(f"Cell index out of range [0, {self.n_cells})")
            if genes.min() < 0 or genes.max() >= self.n_genes:
                raise ValidationError(f"Gene index out of range [0, {self.n_genes})")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValidationError("Stored values must be finite and strictly positive")
        if stage == Stage.RAW_COUNTS and not np.all(values == np.round(values)):
            raise ValidationError("raw_counts matrices must hold integer-valued entries")

        order = np.lexsort((genes, cells))
        cells, genes, values = cells[order], genes[order], values[order]
        if cells.size > 1:
            dup = (cells[1:] == cells[:-1]) & (genes[1:] == genes[:-1])
            if dup.any():
                i = int(np.flatnonzero(dup)[0])
                raise ValidationError(
                    f"Duplicate entry for (cell {cells[i]}, gene {genes[i]})"
                )

        object.__setattr__(self, 'cells', cells)
        object.__setattr__(self, 'genes', genes)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'stage', stage)
        csr = sp.csr_matrix((values, (cells, genes)), shape=(self.n_cells, self.n_genes))
        object.__setattr__(self, '_csr', csr)

    @property
    def n_entries(self) -> int:
        return int(self.values.size)

    @property
    def sparsity(self) -> float:
        total = self.n_cells * self.n_genes
        return 1.0 - self.n_entries / total if total else 0.0

    def to_csr(self) -> sp.csr_matrix:
        return self._csr.copy()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def nonzeros_per_cell(self) -> np.ndarray:
        return np.diff(self._csr.indptr)

    def library_sizes(self) -> np.ndarray:
        return np.asarray(self._csr.sum(axis=1)).ravel()

    def row(self, cell_index: int) -> CellRow:
        start, end = self._csr.indptr[cell_index], self._csr.indptr[cell_index + 1]
        return CellRow(
            cell_index=int(cell_index),
            n_genes=self.n_genes,
            gene_indices=self._csr.indices[start:end].astype(np.int64),
            values=self._csr.data[start:end].astype(np.float64),
        )

    def rows(self) -> Iterator[CellRow]:
        for i in range(self.n_cells):
            yield self.row(i)

    def subset_cells(self, cell_indices: Sequence[int]) -> 'SparseExpressionMatrix':
        """Keeps the given cells, re-densifying cell indices in the given order."""
        return SparseExpressionMatrix.from_csr(self._csr[np.asarray(cell_indices, dtype=np.int64)],
                                               self.stage)

    @classmethod
    def from_csr(cls, csr: sp.spmatrix, stage: Union[Stage, str]) -> 'SparseExpressionMatrix':
        coo = sp.coo_matrix(csr)
        coo.eliminate_zeros()
        return cls(coo.shape[0], coo.shape[1], coo.row, coo.col, coo.data, Stage(stage))

    @classmethod
    def from_dense(cls, dense: np.ndarray, stage: Union[Stage, str]) -> 'SparseExpressionMatrix':
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        cells, genes = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], cells, genes, dense[cells, genes], Stage(stage))


def _infer_stage(values: np.ndarray) -> Stage:
    if np.all(values == np.round(values)):
        return Stage.RAW_COUNTS
    return Stage.NORMALIZED


def _load_coordinate(path: Path, stage: Optional[Stage]) -> SparseExpressionMatrix:
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()

    header_seen = False
    n_cells = n_genes = n_entries = 0
    cells: List[int] = []
    genes: List[int] = []
    values: List[float] = []

    for line_number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith('#'):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}: '{text}'", line_number)
        if not header_seen:
            try:
                n_cells, n_genes, n_entries = (int(p) for p in parts)
            except ValueError:
                raise ParseError(f"header must be three integers: '{text}'", line_number)
            header_seen = True
            continue
        try:
            cell, gene, value = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"cannot parse triplet '{text}'", line_number)
        if not (0 <= cell < n_cells) or not (0 <= gene < n_genes):
            raise ValidationError(
                f"line {line_number}: index ({cell}, {gene}) out of range "
                f"for {n_cells} x {n_genes} matrix"
            )
        if not np.isfinite(value) or value <= 0:
            raise ParseError(f"value must be finite and positive, got {parts[2]}", line_number)
        cells.append(cell)
        genes.append(gene)
        values.append(value)

    if not header_seen:
        raise ParseError("missing header line", 1)
    if len(values) != n_entries:
        raise ParseError(f"header declares {n_entries} entries, found {len(values)}", 1)

    value_array = np.asarray(values, dtype=np.float64)
    return SparseExpressionMatrix(
        n_cells, n_genes, np.asarray(cells), np.asarray(genes), value_array,
        stage or _infer_stage(value_array)
    )


def _load_dense_csv(path: Path, stage: Optional[Stage]) -> SparseExpressionMatrix:
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64)
    except ValueError as e:
        raise ParseError(f"dense CSV must be numeric: {e}")
    dense = frame.to_numpy()
    if np.any(dense < 0) or not np.all(np.isfinite(dense)):
        raise ValidationError("dense CSV values must be finite and non-negative")
    nz = dense[dense > 0]
    return SparseExpressionMatrix.from_dense(dense, stage or _infer_stage(nz))


def load_matrix(path: Union[str, Path], format: str = 'auto',
                stage: Optional[Union[Stage, str]] = None) -> SparseExpressionMatrix:
    """
    Loads an expression matrix.

    Args:
        path: File path
        format: 'coordinate', 'dense_csv' or 'auto' (by extension: .csv is dense)
        stage: Force the stage; inferred from the values when None

    Returns:
        Validated matrix with entries sorted by (cell, gene)
    """
    path = Path(path)
    if format == 'auto':
        format = 'dense_csv' if path.suffix.lower() == '.csv' else 'coordinate'
    stage = Stage(stage) if stage is not None else None

    if format == 'coordinate':
        matrix = _load_coordinate(path, stage)
    elif format == 'dense_csv':
        matrix = _load_dense_csv(path, stage)
    else:
        raise ValueError(f"Unknown matrix format '{format}'. Available: coordinate, dense_csv")

    logger.info("Loaded %s: %d cells x %d genes, %d entries (%s)",
                path, matrix.n_cells, matrix.n_genes, matrix.n_entries, matrix.stage.value)
    return matrix


def _format_value(value: float) -> str:
    if value == int(value) and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(float(value))


def save_matrix(matrix: SparseExpressionMatrix, path: Union[str, Path]) -> Path:
    """Writes the coordinate text format; load_matrix reads it back exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{matrix.n_cells} {matrix.n_genes} {matrix.n_entries}\n")
        for cell, gene, value in zip(matrix.cells, matrix.genes, matrix.values):
            f.write(f"{cell} {gene} {_format_value(value)}\n")
    logger.info("Matrix saved: %s", path)
    return path


def load_labels(path: Union[str, Path]) -> Tuple[List[str], List[str]]:
    """Reads a `cell_id,label` CSV."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = {'cell_id', 'label'} - set(frame.columns)
    if missing:
        raise ParseError(f"labels file is missing columns: {sorted(missing)}")
    return frame['cell_id'].tolist(), frame['label'].tolist()


def save_labels(cell_ids: Sequence[str], labels: Sequence[str], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({'cell_id': list(cell_ids), 'label': [str(l) for l in labels]}).to_csv(
        path, index=False
    )
    return path
