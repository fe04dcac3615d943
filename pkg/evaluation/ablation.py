"""
Ablation harness: pooled embeddings of several models on one dataset,
clustered and scored side by side.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from expression.matrix import SparseExpressionMatrix
from masking.mask_plan import MaskConfig
from model.asymmetric import MaskedExpressionModel, build_model
from model.config import ModelConfig
from scripts.errors import ValidationError
from training.annotation import pooled_embeddings
from training.trainer import TrainConfig, pretrain
from .clustering import METRIC_NAMES, evaluate_embeddings

logger = logging.getLogger(__name__)

ABLATION_KINDS = ('binning', 'objective', 'architecture', 'mask_ratio', 'zero_supervision')
MASK_RATIO_SWEEP = (0.15, 0.30, 0.45, 0.60, 0.75, 0.90)


@dataclass
class AblationVariant:
    name: str
    model_config: ModelConfig
    mask_config: MaskConfig


def embed_cells(model: MaskedExpressionModel, matrix: SparseExpressionMatrix,
                batch_size: int = 64) -> np.ndarray:
    """[cells, dim] max-pooled embeddings as numpy."""
    if model.config.n_genes != matrix.n_genes:
        raise ValidationError(
            f"Model expects {model.config.n_genes} genes, dataset has {matrix.n_genes}"
        )
    embeddings = pooled_embeddings(model, matrix, batch_size=batch_size).cpu().numpy()
    if embeddings.shape[0] != matrix.n_cells:
        raise ValidationError(f"Got {embeddings.shape[0]} embeddings for {matrix.n_cells} cells")
    return embeddings


def ablation_harness(variants: Sequence[Tuple[str, MaskedExpressionModel]], matrix: SparseExpressionMatrix,
                     labels: Sequence[str], seed: int = 0, batch_size: int = 64) -> pd.DataFrame:
    """
    Scores every (name, model) pair on the same dataset.

    Returns:
        DataFrame with columns variant, ARI, NMI, HOMO, CP, SIL
    """
    if len(labels) != matrix.n_cells:
        raise ValidationError(f"{len(labels)} labels for {matrix.n_cells} cells")
    rows = []
    for name, model in variants:
        embeddings = embed_cells(model, matrix, batch_size)
        result = evaluate_embeddings(embeddings, labels, seed=seed)
        logger.info(f"{name}: " + ", ".join(f"{m}={result.metrics[m]:.3f}" for m in METRIC_NAMES))
        rows.append({'variant': name, **result.row()})
    return pd.DataFrame(rows, columns=['variant', *METRIC_NAMES])


def ablation_suite(kind: str, base: ModelConfig, mask_cfg: Optional[MaskConfig] = None) -> List[AblationVariant]:
    """
    Variant lists for the standard comparisons.

    binning: auto-discretization vs the hard-binning schemes
    objective: regression vs bin classification
    architecture: asymmetric encoder-decoder vs encoder-only
    mask_ratio: non-zero mask ratio sweep (zero ratio ten times lower)
    zero_supervision: masking zeros or not
    """
    mask_cfg = mask_cfg or MaskConfig()
    if kind == 'binning':
        schemes = ('auto_discretization', 'round_zero', 'up_no_zero', 'equal_freq')
        return [AblationVariant(s, replace(base, value_encoder=s), mask_cfg) for s in schemes]
    if kind == 'objective':
        return [AblationVariant(o, replace(base, objective=o), mask_cfg) for o in ('regression', 'classification')]
    if kind == 'architecture':
        return [AblationVariant(a, replace(base, architecture=a), mask_cfg) for a in ('asymmetric', 'encoder_only')]
    if kind == 'mask_ratio':
        return [
            AblationVariant(f"mask_{r:.2f}", base,
                            replace(mask_cfg, nonzero_mask_ratio=r, zero_mask_ratio=r / 10.0))
            for r in MASK_RATIO_SWEEP
        ]
    if kind == 'zero_supervision':
        return [
            AblationVariant('with_zeros', base, mask_cfg),
            AblationVariant('without_zeros', base, replace(mask_cfg, zero_mask_ratio=0.0)),
        ]
    raise ValidationError(f"Unknown ablation '{kind}'. Available: {', '.join(ABLATION_KINDS)}")


def train_variants(variants: Sequence[AblationVariant], matrix: SparseExpressionMatrix,
                   train_cfg: TrainConfig) -> List[Tuple[str, MaskedExpressionModel]]:
    """Pre-trains one model per variant with identical optimization settings."""
    trained = []
    for variant in variants:
        model = build_model(variant.model_config)
        pretrain(model, matrix, variant.mask_config, train_cfg)
        trained.append((variant.name, model))
    return trained


def run_ablation(kind: str, base: ModelConfig, matrix: SparseExpressionMatrix, labels: Sequence[str],
                 train_cfg: TrainConfig, mask_cfg: Optional[MaskConfig] = None, seed: int = 0) -> pd.DataFrame:
    variants = ablation_suite(kind, base, mask_cfg)
    return ablation_harness(train_variants(variants, matrix, train_cfg), matrix, labels, seed=seed)


def summarize(frames: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    """Stacks per-seed tables and averages metrics per variant."""
    stacked = pd.concat([f.assign(run=name) for name, f in frames.items()], ignore_index=True)
    return stacked.groupby('variant', sort=False)[list(METRIC_NAMES)].mean().reset_index()
