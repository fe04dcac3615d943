"""
Synthetic count matrices with known cell-type structure.

Each cell type has a mean profile inside a shared rank-k gene program space.
Cells add log-normal noise and a size factor, keep exactly the requested
number of expressed genes (sampled in proportion to their mean, so which
genes are expressed is itself type dependent), and draw Poisson counts.
"""

import logging
from dataclasses import dataclass, fields
from typing import List, Optional, Tuple

import numpy as np

from scripts.errors import ValidationError
from .matrix import SparseExpressionMatrix, Stage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    n_cells: int = 1000
    n_genes: int = 200
    n_cell_types: int = 5
    sparsity: float = 0.9
    seed: int = 0
    rank: Optional[int] = None        # None -> max(2, n_cell_types)
    noise_sigma: float = 0.3
    size_factor_sigma: float = 0.2
    mean_count: float = 6.0

    @classmethod
    def from_dict(cls, config: dict) -> 'SyntheticSpec':
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (config or {}).items() if k in known})

    @property
    def nonzeros_per_cell(self) -> int:
        return int(np.floor((1.0 - self.sparsity) * self.n_genes + 0.5))

    def validate(self):
        if not 0.0 < self.sparsity < 1.0:
            raise ValidationError(f"sparsity must be in (0, 1), got {self.sparsity}")
        if self.n_cell_types < 1:
            raise ValidationError("n_cell_types must be at least 1")
        if self.n_cells < 1 or self.n_genes < 1:
            raise ValidationError("n_cells and n_genes must be positive")
        if self.nonzeros_per_cell < 1:
            raise ValidationError(
                f"sparsity {self.sparsity} leaves fewer than 1 non-zero gene per cell "
                f"at n_genes={self.n_genes}"
            )


def synthesize_dataset(spec: SyntheticSpec) -> Tuple[SparseExpressionMatrix, List[str]]:
    """
    Generates a raw count matrix and its cell-type labels.

    Args:
        spec: Generator parameters; output depends only on spec (seed included)

    Returns:
        (raw_counts matrix, label per cell)
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    rank = spec.rank if spec.rank is not None else max(2, spec.n_cell_types)

    # Gene programs and per-type mixing weights
    programs = rng.gamma(shape=0.6, scale=1.0, size=(rank, spec.n_genes))
    mixing = rng.gamma(shape=1.0, scale=1.0, size=(spec.n_cell_types, rank)) ** 2
    profiles = mixing @ programs + 1e-3
    profiles /= profiles.mean(axis=1, keepdims=True)

    types = np.arange(spec.n_cells) % spec.n_cell_types
    types = rng.permutation(types)

    noise = rng.normal(0.0, spec.noise_sigma, size=(spec.n_cells, spec.n_genes))
    size_factor = rng.lognormal(0.0, spec.size_factor_sigma, size=(spec.n_cells, 1))
    means = profiles[types] * np.exp(noise) * size_factor * spec.mean_count

    # Gumbel top-k: sample n_keep genes per cell without replacement, weight ~ mean
    n_keep = spec.nonzeros_per_cell
    keys = np.log(means) + rng.gumbel(size=means.shape)
    kept = np.argpartition(-keys, n_keep - 1, axis=1)[:, :n_keep]

    cells = np.repeat(np.arange(spec.n_cells), n_keep)
    genes = kept.ravel()
    counts = 1.0 + rng.poisson(means[cells, genes])

    matrix = SparseExpressionMatrix(spec.n_cells, spec.n_genes, cells, genes, counts,
                                    Stage.RAW_COUNTS)
    labels = [f"type_{t}" for t in types]
    logger.info("Synthesized %d cells x %d genes, %d types, %.1f%% sparse",
                spec.n_cells, spec.n_genes, spec.n_cell_types, 100 * matrix.sparsity)
    return matrix, labels
