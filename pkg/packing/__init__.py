"""Encoder input packing and length bucketing."""

from .bucketing import LengthBucketSampler, MaskedCellDataset, make_loader, padding_fraction
from .packer import (
    PAD_VALUE,
    SPECIAL_TOKENS,
    PackedBatch,
    ScatteredBatch,
    filter_and_pack,
    pack_full_sequence,
    special_token_id,
    unpack_scatter,
)

__all__ = [
    'LengthBucketSampler', 'MaskedCellDataset', 'make_loader', 'padding_fraction',
    'PAD_VALUE', 'SPECIAL_TOKENS', 'PackedBatch', 'ScatteredBatch', 'filter_and_pack',
    'pack_full_sequence', 'special_token_id', 'unpack_scatter',
]
