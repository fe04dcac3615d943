"""
Length-bucketed batching of masked cells.

Cells with similar survivor counts are grouped so that padding stays small.
Survivor counts are known before masking (the number of masked non-zeros
only depends on the non-zero count), so buckets are computed once.
"""

import random
from typing import Callable, Iterator, List, Optional, Sequence

from torch.utils.data import DataLoader, Dataset, Sampler

from expression.matrix import SparseExpressionMatrix
from masking.mask_plan import MaskConfig, MaskedCell, apply_mask, build_mask_plan, round_half_up
from .packer import PackedBatch, filter_and_pack


class MaskedCellDataset(Dataset):
    """Masks cells on access; masks are a function of (seed, epoch, cell)."""

    def __init__(self, matrix: SparseExpressionMatrix, mask_cfg: MaskConfig,
                 cell_indices: Optional[Sequence[int]] = None, frozen: bool = False):
        """
        Args:
            matrix: Normalized matrix
            mask_cfg: Mask configuration
            cell_indices: Subset of cells (default: all)
            frozen: Keep epoch 0 masks forever (validation sets)
        """
        self.matrix = matrix
        self.mask_cfg = mask_cfg
        self.cell_indices = list(range(matrix.n_cells)) if cell_indices is None else list(cell_indices)
        self.frozen = frozen
        self.epoch = 0

        nonzeros = matrix.nonzeros_per_cell()[self.cell_indices]
        self.lengths = [
            int(n - round_half_up(mask_cfg.nonzero_mask_ratio * n)) for n in nonzeros
        ]

    def set_epoch(self, epoch: int):
        if not self.frozen:
            self.epoch = epoch

    def __len__(self) -> int:
        return len(self.cell_indices)

    def __getitem__(self, idx: int) -> MaskedCell:
        row = self.matrix.row(self.cell_indices[idx])
        return apply_mask(row, build_mask_plan(row, self.mask_cfg, self.epoch))


class LengthBucketSampler(Sampler):
    """Yields batches of dataset indices grouped by survivor count."""

    def __init__(self, lengths: Sequence[int], batch_size: int,
                 shuffle: bool = True, seed: int = 0):
        self.lengths = list(lengths)
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def __len__(self) -> int:
        return (len(self.lengths) + self.batch_size - 1) // self.batch_size

    def __iter__(self) -> Iterator[List[int]]:
        return iter(self._setup_batches())

    def _setup_batches(self) -> List[List[int]]:
        rng = random.Random(self.seed * 1_000_003 + self.epoch)
        indices = list(range(len(self.lengths)))
        if self.shuffle:
            # Random tie-breaking inside equal lengths, then a stable sort
            rng.shuffle(indices)
        indices.sort(key=lambda i: self.lengths[i])
        batches = [indices[i:i + self.batch_size] for i in range(0, len(indices), self.batch_size)]
        if self.shuffle:
            rng.shuffle(batches)
        return batches


def padding_fraction(batches: Sequence[Sequence[int]], lengths: Sequence[int]) -> float:
    """Share of PAD slots across batches (diagnostic for bucketing)."""
    slots = sum(len(b) * max(lengths[i] for i in b) for b in batches)
    real = sum(lengths[i] for b in batches for i in b)
    return 1.0 - real / slots if slots else 0.0


def make_loader(dataset: MaskedCellDataset, batch_size: int, shuffle: bool = True,
                seed: int = 0, num_workers: int = 0,
                collate_fn: Callable[[List[MaskedCell]], PackedBatch] = filter_and_pack) -> DataLoader:
    """
    DataLoader over bucketed batches. With num_workers > 0 batches are packed
    ahead of the training step by worker processes (bounded prefetch queue).
    """
    sampler = LengthBucketSampler(dataset.lengths, batch_size, shuffle=shuffle, seed=seed)
    return DataLoader(
        dataset,
        batch_sampler=sampler,
        collate_fn=collate_fn,
        num_workers=num_workers,
        prefetch_factor=2 if num_workers > 0 else None,
    )
