"""
Balanced zero / non-zero masking and token replacement.

Non-zero positions are masked at a ratio ten times higher than zero
positions by default, so that the two classes contribute a comparable
number of supervised positions despite the ~90% sparsity of the data.
"""

import logging
from dataclasses import dataclass, field, fields
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from expression.matrix import CellRow, SparseExpressionMatrix
from scripts.errors import DegenerateMaskError, ValidationError
from scripts.seeding import cell_rng

logger = logging.getLogger(__name__)


class ReplacementKind(IntEnum):
    MASK_TOKEN = 0
    RANDOM_VALUE = 1
    KEEP = 2


def round_half_up(x: float) -> int:
    """Rounds halves away from zero (Python's round() rounds halves to even)."""
    return int(np.floor(x + 0.5 + 1e-12))


@dataclass(frozen=True)
class MaskConfig:
    nonzero_mask_ratio: float = 0.3
    zero_mask_ratio: Optional[float] = None       # None -> nonzero_mask_ratio / 10
    replace_probs: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if self.zero_mask_ratio is None:
            object.__setattr__(self, 'zero_mask_ratio', self.nonzero_mask_ratio / 10.0)
        object.__setattr__(self, 'replace_probs', tuple(float(p) for p in self.replace_probs))
        self.validate()

    @classmethod
    def from_dict(cls, config: Optional[dict]) -> 'MaskConfig':
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (config or {}).items() if k in known})

    def validate(self):
        for name in ('nonzero_mask_ratio', 'zero_mask_ratio'):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ValidationError(f"{name} must be in [0, 1), got {value}")
        if len(self.replace_probs) != 3 or min(self.replace_probs) < 0:
            raise ValidationError("replace_probs must be three non-negative probabilities")
        if abs(sum(self.replace_probs) - 1.0) > 1e-9:
            raise ValidationError(f"replace_probs must sum to 1, got {sum(self.replace_probs)}")

    def to_dict(self) -> dict:
        return {
            'nonzero_mask_ratio': self.nonzero_mask_ratio,
            'zero_mask_ratio': self.zero_mask_ratio,
            'replace_probs': list(self.replace_probs),
            'seed': self.seed,
        }

    def expected_counts(self, n_nonzero: int, n_zero: int) -> Tuple[int, int]:
        return (round_half_up(self.nonzero_mask_ratio * n_nonzero),
                round_half_up(self.zero_mask_ratio * n_zero))


@dataclass(frozen=True, eq=False)
class MaskPlan:
    """
    Masked positions of one cell and what replaces each of them.

    `positions`, `kinds` and `random_values` are aligned; random_values is NaN
    where the kind is not RANDOM_VALUE.
    """

    cell_index: int
    n_genes: int
    masked_nonzero: np.ndarray
    masked_zero: np.ndarray
    positions: np.ndarray
    kinds: np.ndarray
    random_values: np.ndarray

    @property
    def n_masked(self) -> int:
        return int(self.positions.size)

    def replacement_for(self, position: int) -> Tuple[ReplacementKind, Optional[float]]:
        i = int(np.searchsorted(self.positions, position))
        if i >= self.positions.size or self.positions[i] != position:
            raise KeyError(f"Position {position} is not masked")
        kind = ReplacementKind(int(self.kinds[i]))
        value = float(self.random_values[i]) if kind == ReplacementKind.RANDOM_VALUE else None
        return kind, value

    @classmethod
    def from_positions(cls, cell: CellRow, positions: Sequence[int],
                       kinds: Optional[Sequence[int]] = None,
                       random_values: Optional[Sequence[float]] = None) -> 'MaskPlan':
        """Builds a plan from explicit positions (default: all MASK_TOKEN)."""
        positions = np.asarray(positions, dtype=np.int64)
        order = np.argsort(positions, kind='stable')
        positions = positions[order]
        if kinds is None:
            kinds = np.full(positions.size, ReplacementKind.MASK_TOKEN, dtype=np.int8)
        kinds = np.asarray(kinds, dtype=np.int8)[order]
        if random_values is None:
            random_values = np.full(positions.size, np.nan)
        random_values = np.asarray(random_values, dtype=np.float64)[order]

        is_nonzero = np.isin(positions, cell.gene_indices)
        return cls(
            cell_index=cell.cell_index,
            n_genes=cell.n_genes,
            masked_nonzero=positions[is_nonzero],
            masked_zero=positions[~is_nonzero],
            positions=positions,
            kinds=kinds,
            random_values=random_values,
        )

    @classmethod
    def empty(cls, cell: CellRow) -> 'MaskPlan':
        return cls.from_positions(cell, [])


def build_mask_plan(cell: CellRow, cfg: MaskConfig, epoch: int = 0) -> MaskPlan:
    """
    Draws the masked positions and replacement kinds for one cell.

    Args:
        cell: Normalized cell row
        cfg: Mask configuration
        epoch: Mixed into the RNG stream so training masks change per epoch

    Returns:
        Plan that depends only on (cfg.seed, epoch, cell.cell_index, cell)
    """
    if cell.n_nonzero < 1:
        raise ValidationError(f"Cell {cell.cell_index} has no non-zero entries to mask")

    rng = cell_rng(cfg.seed, cell.cell_index, epoch)
    n_nonzero_masked, n_zero_masked = cfg.expected_counts(cell.n_nonzero, cell.n_zero)
    if n_nonzero_masked == 0 and n_zero_masked == 0:
        raise DegenerateMaskError(
            f"Cell {cell.cell_index}: mask ratios select no positions "
            f"({cell.n_nonzero} non-zero, {cell.n_zero} zero)"
        )

    masked_nonzero = np.sort(rng.choice(cell.gene_indices, n_nonzero_masked, replace=False))
    masked_zero = np.sort(rng.choice(cell.zero_positions(), n_zero_masked, replace=False))
    positions = np.sort(np.concatenate([masked_nonzero, masked_zero])).astype(np.int64)

    kinds = rng.choice(len(ReplacementKind), size=positions.size, p=cfg.replace_probs).astype(np.int8)
    random_values = np.full(positions.size, np.nan)
    is_random = kinds == ReplacementKind.RANDOM_VALUE
    if is_random.any():
        # Random expression tokens come from this cell's own non-zero values
        random_values[is_random] = rng.choice(cell.values, size=int(is_random.sum()), replace=True)

    return MaskPlan(
        cell_index=cell.cell_index,
        n_genes=cell.n_genes,
        masked_nonzero=masked_nonzero.astype(np.int64),
        masked_zero=masked_zero.astype(np.int64),
        positions=positions,
        kinds=kinds,
        random_values=random_values,
    )


@dataclass(frozen=True, eq=False)
class MaskedCell:
    """A cell after masking: what the model sees plus the ground truth."""

    cell_index: int
    n_genes: int
    original: np.ndarray          # [n_genes] ground truth
    observed: np.ndarray          # [n_genes] values after replacement (0 at MASK_TOKEN)
    is_nonzero: np.ndarray        # [n_genes] original value > 0
    is_masked: np.ndarray         # [n_genes] supervised positions
    is_mask_token: np.ndarray     # [n_genes] positions shown as [MASK]
    plan: MaskPlan = field(repr=False)

    @property
    def masked_positions(self) -> np.ndarray:
        return np.flatnonzero(self.is_masked)

    @property
    def targets(self) -> np.ndarray:
        return self.original[self.is_masked]

    @property
    def survivors(self) -> np.ndarray:
        """Non-zero and unmasked positions: the encoder's input."""
        return np.flatnonzero(self.is_nonzero & ~self.is_masked)

    @property
    def unmasked_zeros(self) -> np.ndarray:
        return np.flatnonzero(~self.is_nonzero & ~self.is_masked)

    @property
    def zero_fraction(self) -> float:
        return 1.0 - float(self.is_nonzero.mean())


def apply_mask(cell: CellRow, plan: MaskPlan) -> MaskedCell:
    """
    Applies a plan to a cell.

    MASK_TOKEN positions are flagged (observed value 0), RANDOM_VALUE positions
    carry the drawn value, KEEP positions keep the original. All of them are
    supervised positions.
    """
    if plan.n_genes != cell.n_genes:
        raise ValidationError(
            f"Plan built for {plan.n_genes} genes applied to a cell with {cell.n_genes}"
        )
    nonzero_set = cell.gene_indices
    if not np.all(np.isin(plan.masked_nonzero, nonzero_set)) or np.any(np.isin(plan.masked_zero, nonzero_set)):
        raise ValidationError(f"Plan does not match the sparsity pattern of cell {cell.cell_index}")
    if plan.positions.size and (plan.positions.min() < 0 or plan.positions.max() >= cell.n_genes):
        raise ValidationError("Masked position out of range")

    original = cell.dense()
    observed = original.copy()
    is_nonzero = original > 0
    is_masked = np.zeros(cell.n_genes, dtype=bool)
    is_mask_token = np.zeros(cell.n_genes, dtype=bool)

    is_masked[plan.positions] = True
    token = plan.kinds == ReplacementKind.MASK_TOKEN
    random = plan.kinds == ReplacementKind.RANDOM_VALUE
    is_mask_token[plan.positions[token]] = True
    observed[plan.positions[token]] = 0.0
    observed[plan.positions[random]] = plan.random_values[random]

    return MaskedCell(
        cell_index=cell.cell_index,
        n_genes=cell.n_genes,
        original=original,
        observed=observed,
        is_nonzero=is_nonzero,
        is_masked=is_masked,
        is_mask_token=is_mask_token,
        plan=plan,
    )


def mask_matrix(matrix: SparseExpressionMatrix, cfg: MaskConfig, epoch: int = 0,
                cell_indices: Optional[Sequence[int]] = None) -> List[MaskedCell]:
    """Masks every (or the selected) cell of a normalized matrix."""
    if cell_indices is None:
        cell_indices = range(matrix.n_cells)
    masked = []
    for i in cell_indices:
        row = matrix.row(int(i))
        masked.append(apply_mask(row, build_mask_plan(row, cfg, epoch)))
    return masked


def unmasked_cells(matrix: SparseExpressionMatrix,
                   cell_indices: Optional[Sequence[int]] = None) -> List[MaskedCell]:
    """Cells wrapped with empty plans, for embedding extraction and fine-tuning."""
    if cell_indices is None:
        cell_indices = range(matrix.n_cells)
    cells = []
    for i in cell_indices:
        row = matrix.row(int(i))
        cells.append(apply_mask(row, MaskPlan.empty(row)))
    return cells
