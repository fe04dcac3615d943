"""
Masked regression and classification losses.
"""

from dataclasses import dataclass
from typing import Iterable, Optional

import torch
import torch.nn.functional as F

from packing.packer import PackedBatch
from scripts.errors import ValidationError

LOSS_DENOMINATORS = ('masked', 'decoder_positions')


@dataclass
class LossReport:
    """
    Loss over the masked positions of a batch.

    masked_mse is always the count-weighted mean of the two breakdown terms.
    `loss` is the differentiable training objective (MSE, or cross-entropy for
    the classification objective), possibly with a different denominator.
    """

    loss: torch.Tensor
    masked_mse: float
    masked_nonzero_mse: float
    masked_zero_mse: float
    n_masked: int
    n_masked_nonzero: int
    n_masked_zero: int

    @property
    def sum_squared_error(self) -> float:
        return self.masked_nonzero_mse * self.n_masked_nonzero + self.masked_zero_mse * self.n_masked_zero

    @classmethod
    def combine(cls, reports: Iterable['LossReport']) -> 'LossReport':
        """Pools reports as if all positions came from one batch."""
        reports = list(reports)
        if not reports:
            raise ValidationError("No loss reports to combine")
        n_nz = sum(r.n_masked_nonzero for r in reports)
        n_z = sum(r.n_masked_zero for r in reports)
        sum_nz = sum(r.masked_nonzero_mse * r.n_masked_nonzero for r in reports)
        sum_z = sum(r.masked_zero_mse * r.n_masked_zero for r in reports)
        n = n_nz + n_z
        return cls(
            loss=torch.tensor((sum_nz + sum_z) / n),
            masked_mse=(sum_nz + sum_z) / n,
            masked_nonzero_mse=sum_nz / n_nz if n_nz else 0.0,
            masked_zero_mse=sum_z / n_z if n_z else 0.0,
            n_masked=n,
            n_masked_nonzero=n_nz,
            n_masked_zero=n_z,
        )

    def to_dict(self) -> dict:
        return {
            'masked_mse': self.masked_mse,
            'nz_mse': self.masked_nonzero_mse,
            'z_mse': self.masked_zero_mse,
            'n_masked': self.n_masked,
        }


def masked_mse(truth: torch.Tensor, predictions: torch.Tensor, masked: torch.Tensor,
               nonzero: Optional[torch.Tensor] = None, denominator: str = 'masked',
               encoder_length: Optional[int] = None) -> LossReport:
    """
    Mean squared error over the masked positions, zero and non-zero alike.

    Args:
        truth: [batch, n_genes] ground-truth values
        predictions: [batch, n_genes]
        masked: [batch, n_genes] supervised positions
        nonzero: [batch, n_genes] truth > 0 (derived from truth when omitted)
        denominator: 'masked' divides by the number of masked positions;
                     'decoder_positions' divides by (n_genes - encoder_length) * batch
        encoder_length: Packed encoder length m, required for 'decoder_positions'

    Returns:
        LossReport
    """
    if truth.shape != predictions.shape or truth.shape != masked.shape:
        raise ValidationError(
            f"Shape mismatch: truth {tuple(truth.shape)}, predictions {tuple(predictions.shape)}, "
            f"mask {tuple(masked.shape)}"
        )
    if denominator not in LOSS_DENOMINATORS:
        raise ValidationError(f"loss denominator must be one of {LOSS_DENOMINATORS}, got {denominator}")
    n_masked = int(masked.sum())
    if n_masked == 0:
        raise ValidationError("No masked positions: the loss is undefined")
    if nonzero is None:
        nonzero = truth > 0

    truth = truth.to(predictions.dtype)
    squared = (truth - predictions).square()
    masked_nz = masked & nonzero
    masked_z = masked & ~nonzero
    sum_nz = squared[masked_nz].sum()
    sum_z = squared[masked_z].sum()
    n_nz, n_z = int(masked_nz.sum()), int(masked_z.sum())

    total = sum_nz + sum_z
    if denominator == 'decoder_positions':
        if encoder_length is None:
            raise ValidationError("The 'decoder_positions' denominator needs the packed encoder length")
        batch, n_genes = truth.shape
        scale = (n_genes - encoder_length) * batch
        if scale <= 0:
            raise ValidationError("(n_genes - encoder_length) * batch must be positive")
        loss = total / scale
    else:
        loss = total / n_masked

    return LossReport(
        loss=loss,
        masked_mse=float(total.detach()) / n_masked,
        masked_nonzero_mse=float(sum_nz.detach()) / n_nz if n_nz else 0.0,
        masked_zero_mse=float(sum_z.detach()) / n_z if n_z else 0.0,
        n_masked=n_masked,
        n_masked_nonzero=n_nz,
        n_masked_zero=n_z,
    )


def value_classes(values: torch.Tensor, n_classes: int) -> torch.Tensor:
    """Class targets for the classification objective: nearest integer, capped."""
    return torch.floor(values + 0.5).long().clamp(0, n_classes - 1)


def masked_cross_entropy(truth: torch.Tensor, logits: torch.Tensor, masked: torch.Tensor,
                         nonzero: Optional[torch.Tensor] = None) -> LossReport:
    """
    Cross-entropy over the masked positions against rounded value classes.
    The MSE fields report the error of the argmax class as a value.
    """
    if logits.dim() != 3 or logits.shape[:2] != truth.shape:
        raise ValidationError(f"logits {tuple(logits.shape)} do not match truth {tuple(truth.shape)}")
    n_masked = int(masked.sum())
    if n_masked == 0:
        raise ValidationError("No masked positions: the loss is undefined")
    targets = value_classes(truth, logits.shape[-1])
    loss = F.cross_entropy(logits[masked], targets[masked])
    with torch.no_grad():
        predictions = logits.argmax(dim=-1).to(truth.dtype)
        report = masked_mse(truth, predictions, masked, nonzero)
    report.loss = loss
    return report


def batch_loss(output, batch: PackedBatch, denominator: str = 'masked') -> LossReport:
    """Training loss of a model output against the batch ground truth."""
    if output.logits is not None:
        return masked_cross_entropy(batch.original, output.logits, batch.is_masked, batch.is_nonzero)
    return masked_mse(batch.original, output.predictions, batch.is_masked, batch.is_nonzero,
                      denominator=denominator, encoder_length=batch.seq_len)
