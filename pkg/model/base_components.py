"""
Base abstract classes for swappable model components.
Defines the interface every attention backend and value encoder implements.
"""

import math
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Tuple

import torch
import torch.nn as nn


class BaseAttention(nn.Module, ABC):
    """
    Multi-head self-attention with a pluggable attention kernel.

    Subclasses only implement `attend`; projections and head handling are shared.
    """

    def __init__(self, dim: int, heads: int, config: Optional[Dict] = None):
        """
        Args:
            dim: Model dimension
            heads: Number of heads (must divide dim)
            config: Backend-specific settings
        """
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} is not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.config = config or {}

        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, _ = x.shape
        return x.view(batch, length, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            x: [batch, length, dim]
            pad_mask: [batch, length], True at slots that neither attend nor are attended to

        Returns:
            [batch, length, dim], zero at PAD slots
        """
        q, k, v = self._split(self.q_proj(x)), self._split(self.k_proj(x)), self._split(self.v_proj(x))
        out = self.attend(q, k, v, pad_mask)
        batch, _, length, _ = out.shape
        out = self.out_proj(out.transpose(1, 2).reshape(batch, length, self.dim))
        if pad_mask is not None:
            out = out.masked_fill(pad_mask.unsqueeze(-1), 0.0)
        return out

    @abstractmethod
    def attend(self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
               pad_mask: Optional[torch.Tensor]) -> torch.Tensor:
        """
        Attention kernel on split heads.

        Args:
            q, k, v: [batch, heads, length, head_dim]
            pad_mask: [batch, length] or None

        Returns:
            [batch, heads, length, head_dim]
        """

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.head_dim)

    def get_backend_info(self) -> Dict[str, Any]:
        """
        Returns information about the attention backend.

        Returns:
            Dictionary with information about the backend
        """
        return {
            'backend': self.__class__.__name__,
            'dim': self.dim,
            'heads': self.heads,
        }


class BaseValueEncoder(nn.Module, ABC):
    """Maps scalar expression values to d-dimensional embeddings."""

    def __init__(self, dim: int, config: Optional[Dict] = None):
        super().__init__()
        self.dim = dim
        self.config = config or {}

    @abstractmethod
    def forward(self, values: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """
        Args:
            values: [...] non-negative expression values

        Returns:
            (embeddings [..., dim], bin weights [..., bins] or None)
        """

    def get_backend_info(self) -> Dict[str, Any]:
        return {
            'backend': self.__class__.__name__,
            'dim': self.dim,
        }
