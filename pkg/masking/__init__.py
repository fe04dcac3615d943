"""Mask plans for the masked-regression pre-training task."""

from .mask_plan import (
    MaskConfig,
    MaskedCell,
    MaskPlan,
    ReplacementKind,
    apply_mask,
    build_mask_plan,
    mask_matrix,
    round_half_up,
    unmasked_cells,
)

__all__ = [
    'MaskConfig', 'MaskedCell', 'MaskPlan', 'ReplacementKind', 'apply_mask',
    'build_mask_plan', 'mask_matrix', 'round_half_up', 'unmasked_cells',
]
