"""
Filter-and-pack: build the short encoder input from masked cells and keep
the maps needed to put encoder outputs back at their gene positions.

Only non-zero, unmasked positions ("survivors") reach the encoder. They are
laid out in ascending gene order and right-padded to the longest cell in
the batch.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import torch

from masking.mask_plan import MaskedCell
from scripts.errors import ValidationError

logger = logging.getLogger(__name__)

PAD_VALUE = 0.0
SPECIAL_TOKENS = ('MASK', 'PAD', 'ZERO')


def special_token_id(n_genes: int, name: str) -> int:
    """Special tokens sit right after the gene ids in the embedding table."""
    return n_genes + SPECIAL_TOKENS.index(name)


@dataclass(eq=False)
class PackedBatch:
    """
    Encoder-side packed tensors plus the full-length decoder-side views.

    Encoder side, shape [batch, m]: values, gene_indices, pad_mask (True at PAD),
    mask_token (True where the slot shows [MASK]; only used by full-sequence packing).
    Decoder side, shape [batch, n_genes]: observed, original, is_masked,
    is_mask_token, is_nonzero.
    """

    n_genes: int
    cell_indices: List[int]
    values: torch.Tensor
    gene_indices: torch.Tensor
    pad_mask: torch.Tensor
    mask_token: torch.Tensor
    scatter_map: List[np.ndarray]
    masked_sets: List[np.ndarray]
    zero_sets: List[np.ndarray]
    observed: torch.Tensor
    original: torch.Tensor
    is_masked: torch.Tensor
    is_mask_token: torch.Tensor
    is_nonzero: torch.Tensor
    full_sequence: bool = False
    zero_fractions: List[float] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return int(self.values.shape[0])

    @property
    def seq_len(self) -> int:
        return int(self.values.shape[1])

    @property
    def survivor_counts(self) -> List[int]:
        return [int(s.size) for s in self.scatter_map]

    @property
    def survivor_flags(self) -> torch.Tensor:
        """[batch, n_genes] True where a position is fed to the encoder."""
        return self.is_nonzero & ~self.is_masked

    @property
    def unmasked_zero_flags(self) -> torch.Tensor:
        return ~self.is_nonzero & ~self.is_masked

    def to(self, dtype: torch.dtype) -> 'PackedBatch':
        """Casts the real-valued tensors (e.g. to float64 for gradient checks)."""
        self.values = self.values.to(dtype)
        self.observed = self.observed.to(dtype)
        self.original = self.original.to(dtype)
        return self


def _decoder_views(cells: Sequence[MaskedCell]):
    observed = torch.as_tensor(np.stack([c.observed for c in cells]), dtype=torch.float32)
    original = torch.as_tensor(np.stack([c.original for c in cells]), dtype=torch.float32)
    is_masked = torch.as_tensor(np.stack([c.is_masked for c in cells]))
    is_mask_token = torch.as_tensor(np.stack([c.is_mask_token for c in cells]))
    is_nonzero = torch.as_tensor(np.stack([c.is_nonzero for c in cells]))
    return observed, original, is_masked, is_mask_token, is_nonzero


def _check_batch(cells: Sequence[MaskedCell]) -> int:
    if not cells:
        raise ValidationError("Cannot pack an empty batch")
    n_genes = cells[0].n_genes
    if any(c.n_genes != n_genes for c in cells):
        raise ValidationError("All cells in a batch must share n_genes")
    return n_genes


def filter_and_pack(cells: Sequence[MaskedCell]) -> PackedBatch:
    """
    Removes masked and zero positions and pads survivors to the batch maximum.

    Args:
        cells: Masked cells sharing n_genes

    Returns:
        PackedBatch with m = max survivor count in the batch
    """
    n_genes = _check_batch(cells)
    survivors = [c.survivors for c in cells]
    for cell, kept in zip(cells, survivors):
        if kept.size == 0:
            raise ValidationError(
                f"Cell {cell.cell_index} has no unmasked non-zero positions; "
                "the encoder input would be empty"
            )

    batch_size = len(cells)
    m = max(s.size for s in survivors)
    pad_id = special_token_id(n_genes, 'PAD')

    values = np.full((batch_size, m), PAD_VALUE, dtype=np.float32)
    gene_indices = np.full((batch_size, m), pad_id, dtype=np.int64)
    pad_mask = np.ones((batch_size, m), dtype=bool)
    for b, (cell, kept) in enumerate(zip(cells, survivors)):
        values[b, :kept.size] = cell.observed[kept]
        gene_indices[b, :kept.size] = kept
        pad_mask[b, :kept.size] = False

    observed, original, is_masked, is_mask_token, is_nonzero = _decoder_views(cells)
    return PackedBatch(
        n_genes=n_genes,
        cell_indices=[c.cell_index for c in cells],
        values=torch.from_numpy(values),
        gene_indices=torch.from_numpy(gene_indices),
        pad_mask=torch.from_numpy(pad_mask),
        mask_token=torch.zeros(batch_size, m, dtype=torch.bool),
        scatter_map=survivors,
        masked_sets=[c.masked_positions for c in cells],
        zero_sets=[c.unmasked_zeros for c in cells],
        observed=observed,
        original=original,
        is_masked=is_masked,
        is_mask_token=is_mask_token,
        is_nonzero=is_nonzero,
        zero_fractions=[c.zero_fraction for c in cells],
    )


def pack_full_sequence(cells: Sequence[MaskedCell]) -> PackedBatch:
    """
    Full-length packing for encoder-only models: every gene position is a slot,
    masked positions keep their replacement (MASK_TOKEN slots are flagged).
    """
    n_genes = _check_batch(cells)
    observed, original, is_masked, is_mask_token, is_nonzero = _decoder_views(cells)
    batch_size = len(cells)
    positions = np.arange(n_genes)

    return PackedBatch(
        n_genes=n_genes,
        cell_indices=[c.cell_index for c in cells],
        values=observed.clone(),
        gene_indices=torch.arange(n_genes).unsqueeze(0).repeat(batch_size, 1),
        pad_mask=torch.zeros(batch_size, n_genes, dtype=torch.bool),
        mask_token=is_mask_token.clone(),
        scatter_map=[positions.copy() for _ in cells],
        masked_sets=[c.masked_positions for c in cells],
        zero_sets=[c.unmasked_zeros for c in cells],
        observed=observed,
        original=original,
        is_masked=is_masked,
        is_mask_token=is_mask_token,
        is_nonzero=is_nonzero,
        full_sequence=True,
        zero_fractions=[c.zero_fraction for c in cells],
    )


@dataclass(eq=False)
class ScatteredBatch:
    """Encoder outputs placed back at full length, with the class of every position."""

    full: torch.Tensor            # [batch, n_genes, d], zeros where not a survivor
    survivor_flags: torch.Tensor  # [batch, n_genes]
    masked_flags: torch.Tensor    # [batch, n_genes]
    zero_flags: torch.Tensor      # [batch, n_genes] unmasked zeros


def unpack_scatter(batch: PackedBatch, encoder_out: torch.Tensor) -> ScatteredBatch:
    """
    Scatters encoder outputs back to their original gene positions; PAD slots
    are dropped. Differentiable with respect to encoder_out.
    """
    if encoder_out.dim() != 3 or tuple(encoder_out.shape[:2]) != (batch.batch_size, batch.seq_len):
        raise ValidationError(
            f"encoder_out shape {tuple(encoder_out.shape)} does not match packed batch "
            f"[{batch.batch_size}, {batch.seq_len}, d]"
        )

    batch_size, _, dim = encoder_out.shape
    n_genes = batch.n_genes
    valid = ~batch.pad_mask
    rows = torch.arange(batch_size).unsqueeze(1).expand_as(batch.gene_indices)
    flat_index = (rows * n_genes + batch.gene_indices)[valid]

    full = encoder_out.new_zeros(batch_size * n_genes, dim)
    full = full.index_copy(0, flat_index, encoder_out[valid])
    full = full.view(batch_size, n_genes, dim)

    survivor_flags = torch.zeros(batch_size * n_genes, dtype=torch.bool)
    survivor_flags[flat_index] = True
    survivor_flags = survivor_flags.view(batch_size, n_genes)

    if batch.full_sequence:
        masked_flags = torch.zeros_like(survivor_flags)
        zero_flags = torch.zeros_like(survivor_flags)
    else:
        masked_flags = batch.is_masked.clone()
        zero_flags = batch.unmasked_zero_flags

    return ScatteredBatch(full=full, survivor_flags=survivor_flags,
                          masked_flags=masked_flags, zero_flags=zero_flags)
