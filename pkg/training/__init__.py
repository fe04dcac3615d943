"""Objectives, gradient checks, pre-training and fine-tuning."""

from .loss import LossReport, batch_loss, masked_cross_entropy, masked_mse, value_classes
from .autodiff import finite_difference_grad, grad, gradient_check, relative_error
from .trainer import (
    TrainConfig,
    TrainResult,
    evaluate_loss,
    pretrain,
    redraw_features,
    split_cells,
    warmup_factor,
)
from .recovery import RecoveryReport, correlation_by_bucket, pearson_or_nan, recovery_correlation
from .annotation import (
    AnnotationClassifier,
    AnnotationResult,
    FinetuneConfig,
    finetune_annotation,
    macro_scores,
    pooled_embeddings,
    train_linear_head,
)

__all__ = [
    'LossReport', 'batch_loss', 'masked_cross_entropy', 'masked_mse', 'value_classes',
    'finite_difference_grad', 'grad', 'gradient_check', 'relative_error',
    'TrainConfig', 'TrainResult', 'evaluate_loss', 'pretrain', 'redraw_features', 'split_cells',
    'warmup_factor',
    'RecoveryReport', 'correlation_by_bucket', 'pearson_or_nan', 'recovery_correlation',
    'AnnotationClassifier', 'AnnotationResult', 'FinetuneConfig', 'finetune_annotation',
    'macro_scores', 'pooled_embeddings', 'train_linear_head',
]
