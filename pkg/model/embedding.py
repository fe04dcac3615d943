"""
Value and gene embeddings.

The auto-discretization block turns a scalar expression value into a soft
assignment over b learned bins and returns the weighted mix of bin
embeddings. The hard-binning schemes below exist for comparison runs.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from packing.packer import SPECIAL_TOKENS, PackedBatch, special_token_id
from scripts.errors import ValidationError
from .base_components import BaseValueEncoder

DEFAULT_BINS = 100
EMBEDDING_INIT_STD = 0.02


class AutoDiscretizer(BaseValueEncoder):
    """
    Soft binning of scalar values.

    v1 = v * w1, v2 = LeakyReLU(v1), v3 = w2 @ v2 + alpha * v2,
    v4 = softmax(v3), e = T @ v4.
    """

    def __init__(self, dim: int, config: Optional[Dict] = None):
        super().__init__(dim, config)
        self.bins = int(self.config.get('bins', DEFAULT_BINS))
        if self.bins < 2:
            raise ValidationError(f"Auto-discretization needs at least 2 bins, got {self.bins}")
        self.leak = float(self.config.get('leak', 0.01))
        use_bias = bool(self.config.get('bias', False))

        self.w1 = nn.Parameter(EMBEDDING_INIT_STD * torch.randn(self.bins))
        self.w2 = nn.Parameter(torch.randn(self.bins, self.bins) / math.sqrt(self.bins))
        self.alpha = nn.Parameter(torch.tensor(1.0))
        self.table = nn.Parameter(EMBEDDING_INIT_STD * torch.randn(dim, self.bins))
        if use_bias:
            self.b1 = nn.Parameter(torch.zeros(self.bins))
            self.b2 = nn.Parameter(torch.zeros(self.bins))
        else:
            self.register_parameter('b1', None)
            self.register_parameter('b2', None)

    def bin_weights(self, values: torch.Tensor) -> torch.Tensor:
        """Softmax bin assignment, shape [..., bins]."""
        x = values.to(self.w1.dtype).unsqueeze(-1)
        v1 = x * self.w1
        if self.b1 is not None:
            v1 = v1 + self.b1
        v2 = F.leaky_relu(v1, negative_slope=self.leak)
        v3 = v2 @ self.w2.T + self.alpha * v2
        if self.b2 is not None:
            v3 = v3 + self.b2
        return torch.softmax(v3, dim=-1)

    def forward(self, values: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        weights = self.bin_weights(values)
        return weights @ self.table.T, weights

    def get_backend_info(self) -> Dict:
        info = super().get_backend_info()
        info.update({'bins': self.bins, 'leak': self.leak, 'bias': self.b1 is not None})
        return info


def discretize(value: float, disc: AutoDiscretizer) -> Tuple[np.ndarray, np.ndarray]:
    """
    Embeds one scalar value.

    Args:
        value: Finite, non-negative expression value
        disc: Auto-discretization block

    Returns:
        (embedding [d], weights [b]) as numpy arrays
    """
    if not math.isfinite(value):
        raise ValidationError(f"Cannot discretize non-finite value {value}")
    if value < 0:
        raise ValidationError(f"Expression values must be non-negative, got {value}")
    with torch.no_grad():
        embedding, weights = disc(torch.tensor([float(value)]))
    return embedding[0].cpu().numpy(), weights[0].cpu().numpy()


class BinningScheme(str, Enum):
    ROUND_ZERO = 'round_zero'
    ROUND_FLOOR = 'round_floor'
    UP_NO_ZERO = 'up_no_zero'
    EQUAL_FREQ = 'equal_freq'


@dataclass
class BinningStats:
    """Percentile edges for equal-frequency binning."""

    n_bins: int
    edges: Optional[np.ndarray] = None

    @property
    def fitted(self) -> bool:
        return self.edges is not None

    def fit(self, values: np.ndarray) -> 'BinningStats':
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size == 0:
            raise ValidationError("Cannot fit binning statistics on no values")
        quantiles = np.linspace(0.0, 1.0, self.n_bins + 1)[1:-1]
        self.edges = np.quantile(values, quantiles)
        return self


def baseline_bin(value: float, scheme, stats: Optional[BinningStats] = None) -> int:
    """
    Hard bin index of a value under one of the comparison schemes.

    round_zero rounds to the nearest integer (halves up), round_floor truncates,
    up_no_zero keeps bin 0 for exact zeros and takes the ceiling otherwise,
    equal_freq buckets by dataset percentiles.
    """
    scheme = BinningScheme(scheme)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(f"Cannot bin value {value}")
    if scheme is BinningScheme.ROUND_ZERO:
        return int(math.floor(value + 0.5))
    if scheme is BinningScheme.ROUND_FLOOR:
        return int(math.floor(value))
    if scheme is BinningScheme.UP_NO_ZERO:
        return 0 if value == 0 else int(math.ceil(value))
    if stats is None or not stats.fitted:
        raise ValidationError("equal_freq binning requires fitted statistics")
    return int(np.searchsorted(stats.edges, value, side='right'))


def bin_values(values: torch.Tensor, scheme, stats: Optional[BinningStats] = None) -> torch.Tensor:
    """Vectorized baseline_bin over a tensor."""
    scheme = BinningScheme(scheme)
    values = values.to(torch.float64)
    if scheme is BinningScheme.ROUND_ZERO:
        return torch.floor(values + 0.5).long()
    if scheme is BinningScheme.ROUND_FLOOR:
        return torch.floor(values).long()
    if scheme is BinningScheme.UP_NO_ZERO:
        return torch.ceil(values).long()
    if stats is None or not stats.fitted:
        raise ValidationError("equal_freq binning requires fitted statistics")
    edges = torch.as_tensor(stats.edges, dtype=torch.float64, device=values.device)
    return torch.bucketize(values, edges, right=True)


class BinnedValueEncoder(BaseValueEncoder):
    """Hard-binning value embedding: one learned row per bin."""

    def __init__(self, dim: int, config: Optional[Dict] = None):
        super().__init__(dim, config)
        self.scheme = BinningScheme(self.config.get('scheme', self.config.get('backend', 'round_zero')))
        self.bins = int(self.config.get('bins', DEFAULT_BINS))
        self.table = nn.Embedding(self.bins, dim)
        # Percentile edges live in buffers so they travel with checkpoints
        self.register_buffer('edges', torch.zeros(self.bins - 1, dtype=torch.float64))
        self.register_buffer('fitted', torch.tensor(False))

    @property
    def stats(self) -> BinningStats:
        edges = self.edges.cpu().numpy() if bool(self.fitted) else None
        return BinningStats(self.bins, edges)

    def fit(self, values: np.ndarray) -> 'BinnedValueEncoder':
        stats = BinningStats(self.bins).fit(values)
        self.edges.copy_(torch.as_tensor(stats.edges, dtype=torch.float64))
        self.fitted.fill_(True)
        return self

    def forward(self, values: torch.Tensor) -> Tuple[torch.Tensor, None]:
        index = bin_values(values, self.scheme, self.stats).clamp(0, self.bins - 1)
        return self.table(index.to(self.table.weight.device)), None

    def get_backend_info(self) -> Dict:
        info = super().get_backend_info()
        info.update({'scheme': self.scheme.value, 'bins': self.bins})
        return info


class GeneEmbeddingTable(nn.Module):
    """Gene identity embeddings followed by the MASK, PAD and ZERO rows."""

    def __init__(self, n_genes: int, dim: int):
        super().__init__()
        self.n_genes = n_genes
        self.dim = dim
        self.table = nn.Embedding(n_genes + len(SPECIAL_TOKENS), dim)

    @property
    def n_rows(self) -> int:
        return self.table.num_embeddings

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.n_rows):
            raise ValidationError(
                f"Unknown gene index in [{int(ids.min())}, {int(ids.max())}]; "
                f"table has {self.n_rows} rows"
            )
        return self.table(ids)

    def special(self, name: str) -> torch.Tensor:
        """Embedding row of a special token, shape [dim]."""
        return self.table.weight[special_token_id(self.n_genes, name)]

    def all_genes(self) -> torch.Tensor:
        """Gene rows only, shape [n_genes, dim]."""
        return self.table.weight[:self.n_genes]


def embed_tokens(batch: PackedBatch, value_encoder: BaseValueEncoder,
                 genes: GeneEmbeddingTable) -> torch.Tensor:
    """
    Encoder input I = E + G over the packed slots.

    Slots flagged as mask tokens take the MASK embedding instead of a value
    embedding. PAD slots are zero.
    """
    real_slots = batch.gene_indices[~batch.pad_mask]
    if real_slots.numel() and int(real_slots.max()) >= genes.n_genes:
        raise ValidationError(f"Gene index {int(real_slots.max())} out of range [0, {genes.n_genes})")

    values, _ = value_encoder(batch.values)
    mask_row = genes.special('MASK').to(values.dtype)
    values = torch.where(batch.mask_token.unsqueeze(-1), mask_row, values)
    tokens = values + genes(batch.gene_indices).to(values.dtype)
    return tokens.masked_fill(batch.pad_mask.unsqueeze(-1), 0.0)
