"""Analytic FLOPs and parameter accounting."""

from .cost_model import (
    PUBLISHED_COSTS,
    TRAIN_EPOCHS,
    TRAIN_SAMPLES,
    ArchitectureSpec,
    ComponentSpec,
    CostReport,
    check_declared_parameters,
    count_parameters,
    efficiency_report,
    estimate_flops,
    format_report,
    forward_breakdown,
    load_specs,
    report_frame,
    spec_from_model_config,
    total_train_flops,
)

__all__ = [
    'PUBLISHED_COSTS', 'TRAIN_EPOCHS', 'TRAIN_SAMPLES', 'ArchitectureSpec', 'ComponentSpec',
    'CostReport', 'check_declared_parameters', 'count_parameters', 'efficiency_report',
    'estimate_flops', 'format_report', 'forward_breakdown', 'load_specs', 'report_frame',
    'spec_from_model_config', 'total_train_flops',
]
