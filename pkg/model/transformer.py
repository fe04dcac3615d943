"""Pre-LN transformer blocks and stacks with per-layer finiteness checks."""

from typing import Dict, Optional

import torch
import torch.nn as nn

from scripts.errors import NumericFailureError
from scripts.seeding import derive_seed
from .backend_factory import BackendFactory


class FeedForward(nn.Module):
    def __init__(self, dim: int, multiplier: int = 4):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(dim, multiplier * dim),
            nn.GELU(),
            nn.Linear(multiplier * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class TransformerBlock(nn.Module):
    """x + Attn(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, dim: int, heads: int, attention_config: Dict, ffn_multiplier: int = 4):
        super().__init__()
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = BackendFactory.create_attention(dim, heads, attention_config)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim, ffn_multiplier)

    def forward(self, x: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.attn(self.attn_norm(x), pad_mask)
        x = x + self.ffn(self.ffn_norm(x))
        if pad_mask is not None:
            x = x.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        return x


class TransformerStack(nn.Module):
    """
    A stack of blocks followed by a final LayerNorm.

    depth=0 is the identity (no final norm). Raises NumericFailureError naming
    the first layer whose output is not finite.
    """

    def __init__(self, depth: int, dim: int, heads: int, attention_config: Dict,
                 ffn_multiplier: int = 4, stage: str = 'encoder'):
        super().__init__()
        self.depth = depth
        self.dim = dim
        self.stage = stage
        self.feature_seed = int(attention_config.get('feature_seed', 0))
        self.blocks = nn.ModuleList([
            TransformerBlock(dim, heads, {**attention_config, 'feature_seed': layer_seed(self.feature_seed, layer)},
                             ffn_multiplier)
            for layer in range(depth)
        ])
        self.final_norm = nn.LayerNorm(dim) if depth > 0 else None

    def forward(self, x: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        if not torch.isfinite(x).all():
            raise NumericFailureError(self.stage, layer=0)
        for layer, block in enumerate(self.blocks):
            x = block(x, pad_mask)
            if not torch.isfinite(x).all():
                raise NumericFailureError(self.stage, layer=layer)
        if self.final_norm is not None:
            x = self.final_norm(x)
            if pad_mask is not None:
                x = x.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        return x

    def redraw_features(self, seed: int) -> int:
        """
        Redraws the random features of every linear-attention block.

        Block i draws from layer_seed(seed, i), so redrawing with the
        construction seed restores the original features.

        Returns:
            Number of blocks redrawn
        """
        self.feature_seed = int(seed)
        redrawn = 0
        for layer, block in enumerate(self.blocks):
            if hasattr(block.attn, 'redraw_features'):
                block.attn.redraw_features(layer_seed(seed, layer))
                redrawn += 1
        return redrawn


def layer_seed(stack_seed: int, layer: int) -> int:
    return derive_seed(stack_seed, f"layer/{layer}")
