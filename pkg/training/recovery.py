"""
Masked-value recovery: Pearson correlation on masked positions, overall and
by cell sparsity.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from scipy import stats

from expression.matrix import SparseExpressionMatrix
from masking.mask_plan import MaskConfig
from model.asymmetric import MaskedExpressionModel
from packing.bucketing import MaskedCellDataset, make_loader
from .trainer import collate_for

logger = logging.getLogger(__name__)

N_SPARSITY_BUCKETS = 10


def pearson_or_nan(truth: np.ndarray, predictions: np.ndarray) -> Tuple[float, bool]:
    """
    Pearson r, or (nan, False) when either side is constant or too short.
    """
    truth = np.asarray(truth, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if truth.size < 2 or np.ptp(truth) == 0 or np.ptp(predictions) == 0:
        return float('nan'), False
    r, _ = stats.pearsonr(truth, predictions)
    return float(r), bool(math.isfinite(r))


@dataclass
class BucketCorrelation:
    lower: float
    upper: float
    n_cells: int
    n_positions: int
    r: float
    defined: bool


@dataclass
class RecoveryReport:
    r: float
    defined: bool
    n_positions: int
    buckets: List[BucketCorrelation] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = [vars(b) for b in self.buckets]
        rows.append({'lower': 0.0, 'upper': 1.0, 'n_cells': sum(b.n_cells for b in self.buckets),
                     'n_positions': self.n_positions, 'r': self.r, 'defined': self.defined})
        return pd.DataFrame(rows, columns=['lower', 'upper', 'n_cells', 'n_positions', 'r', 'defined'])


def sparsity_bucket(zero_fraction: float, n_buckets: int = N_SPARSITY_BUCKETS) -> int:
    return min(int(zero_fraction * n_buckets), n_buckets - 1)


def correlation_by_bucket(truth: Sequence[np.ndarray], predictions: Sequence[np.ndarray],
                          zero_fractions: Sequence[float],
                          n_buckets: int = N_SPARSITY_BUCKETS) -> RecoveryReport:
    """
    Groups per-cell masked positions by zero-fraction decile.

    Args:
        truth: Per cell, ground truth at the masked positions
        predictions: Per cell, predictions at the same positions
        zero_fractions: Per cell, share of zero genes before masking

    Returns:
        RecoveryReport; buckets with fewer than 2 positions are skipped with a warning
    """
    all_truth = np.concatenate(truth) if len(truth) else np.zeros(0)
    all_pred = np.concatenate(predictions) if len(predictions) else np.zeros(0)
    r, defined = pearson_or_nan(all_truth, all_pred)
    if not defined:
        logger.warning("Overall recovery correlation is undefined (constant or too few values)")

    report = RecoveryReport(r=r, defined=defined, n_positions=int(all_truth.size))
    assignment = np.array([sparsity_bucket(z, n_buckets) for z in zero_fractions], dtype=int)
    for bucket in range(n_buckets):
        members = np.flatnonzero(assignment == bucket)
        if members.size == 0:
            continue
        t = np.concatenate([truth[i] for i in members])
        p = np.concatenate([predictions[i] for i in members])
        if t.size < 2:
            logger.warning(f"Skipping sparsity bucket {bucket}: only {t.size} masked position(s)")
            continue
        bucket_r, bucket_defined = pearson_or_nan(t, p)
        report.buckets.append(BucketCorrelation(
            lower=bucket / n_buckets, upper=(bucket + 1) / n_buckets,
            n_cells=int(members.size), n_positions=int(t.size),
            r=bucket_r, defined=bucket_defined,
        ))
    return report


@torch.no_grad()
def recovery_correlation(model: MaskedExpressionModel, matrix: SparseExpressionMatrix,
                         mask_cfg: MaskConfig, cell_indices: Optional[Sequence[int]] = None,
                         batch_size: int = 64) -> RecoveryReport:
    """
    Masks held-out cells (frozen masks), predicts, and correlates predictions with
    the truth over every masked position.
    """
    dataset = MaskedCellDataset(matrix, mask_cfg, cell_indices, frozen=True)
    loader = make_loader(dataset, batch_size, shuffle=False, collate_fn=collate_for(model))

    was_training = model.training
    model.eval()
    truth, predictions, zero_fractions = [], [], []
    for batch in loader:
        output = model(batch)
        for b in range(batch.batch_size):
            masked = batch.is_masked[b]
            truth.append(batch.original[b][masked].cpu().numpy())
            predictions.append(output.predictions[b][masked].cpu().numpy())
            zero_fractions.append(batch.zero_fractions[b])
    model.train(was_training)
    return correlation_by_bucket(truth, predictions, zero_fractions)
