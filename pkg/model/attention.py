"""
Attention backends: exact softmax attention and a linear-cost approximation
with positive random features.
"""

import logging
from typing import Dict, Optional

import torch

from .base_components import BaseAttention

logger = logging.getLogger(__name__)


class ExactAttention(BaseAttention):
    """Scaled dot-product softmax attention, quadratic in sequence length."""

    def attend(self, q, k, v, pad_mask):
        scores = torch.matmul(q, k.transpose(-2, -1)) * self.scale
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float('-inf'))
        return torch.matmul(torch.softmax(scores, dim=-1), v)


def gaussian_random_features(n_features: int, dim: int, orthogonal: bool = False,
                             generator: Optional[torch.Generator] = None,
                             dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """
    Random projection matrix [n_features, dim] with N(0, I) rows.

    With orthogonal=True rows are stacked orthogonal blocks, rescaled to the
    norms of Gaussian rows so the kernel estimate stays unbiased.
    """
    if not orthogonal:
        return torch.randn(n_features, dim, generator=generator, dtype=dtype)

    blocks = []
    remaining = n_features
    while remaining > 0:
        unstructured = torch.randn(dim, dim, generator=generator, dtype=torch.float64)
        q, _ = torch.linalg.qr(unstructured)
        block = q.T
        blocks.append(block[:min(remaining, dim)])
        remaining -= dim
    matrix = torch.cat(blocks)
    norms = torch.randn(n_features, dim, generator=generator, dtype=torch.float64).norm(dim=1)
    return (norms.unsqueeze(1) * matrix).to(dtype)


class LinearRandomFeatureAttention(BaseAttention):
    """
    Softmax-kernel attention estimated with positive random features.

    phi(x) = exp(w^T x - |x|^2 / 2) / sqrt(r), with inputs scaled by
    head_dim^(-1/4) so that E[phi(q) . phi(k)] = exp(q . k / sqrt(head_dim)).
    Cost is linear in sequence length.
    """

    def __init__(self, dim: int, heads: int, config: Optional[Dict] = None):
        super().__init__(dim, heads, config)
        self.n_features = int(self.config.get('n_random_features', 256))
        self.orthogonal = bool(self.config.get('orthogonal_features', False))
        self.eps = float(self.config.get('kernel_eps', 1e-8))
        self.register_buffer('features', torch.empty(self.n_features, self.head_dim))
        self.redraw_features(int(self.config.get('feature_seed', 0)))

    def redraw_features(self, seed: int):
        """Draws a fresh feature matrix from a dedicated generator."""
        generator = torch.Generator().manual_seed(seed)
        drawn = gaussian_random_features(self.n_features, self.head_dim, self.orthogonal,
                                         generator=generator, dtype=self.features.dtype)
        self.features.copy_(drawn.to(self.features.device))
        logger.debug(f"Drew {self.n_features} random features (seed {seed}, orthogonal={self.orthogonal})")

    def _log_features(self, x: torch.Tensor) -> torch.Tensor:
        x = x * self.head_dim ** -0.25
        projected = torch.matmul(x, self.features.to(x.dtype).T)
        return projected - 0.5 * x.square().sum(dim=-1, keepdim=True)

    def attend(self, q, k, v, pad_mask):
        ratio = self.n_features ** -0.5
        log_q = self._log_features(q)
        log_k = self._log_features(k)

        # Per-query and per-head shifts cancel between numerator and denominator
        q_prime = ratio * torch.exp(log_q - log_q.amax(dim=-1, keepdim=True))
        if pad_mask is not None:
            log_k = log_k.masked_fill(pad_mask[:, None, :, None], float('-inf'))
        k_shift = log_k.amax(dim=(-2, -1), keepdim=True)
        k_prime = ratio * torch.exp(log_k - k_shift)

        context = torch.einsum('bhlr,bhld->bhrd', k_prime, v)
        numerator = torch.einsum('bhlr,bhrd->bhld', q_prime, context)
        denominator = torch.einsum('bhlr,bhr->bhl', q_prime, k_prime.sum(dim=2))
        return numerator / (denominator.unsqueeze(-1) + self.eps * ratio * ratio)

    def get_backend_info(self) -> Dict:
        info = super().get_backend_info()
        info.update({'n_random_features': self.n_features, 'orthogonal': self.orthogonal})
        return info
