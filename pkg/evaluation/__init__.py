"""Clustering evaluation of cell embeddings and ablation comparisons."""

from .clustering import METRIC_NAMES, ClusteringResult, cluster_cells, clustering_metrics, evaluate_embeddings
from .ablation import (
    ABLATION_KINDS,
    AblationVariant,
    ablation_harness,
    ablation_suite,
    embed_cells,
    run_ablation,
    summarize,
    train_variants,
)

__all__ = [
    'METRIC_NAMES', 'ClusteringResult', 'cluster_cells', 'clustering_metrics', 'evaluate_embeddings',
    'ABLATION_KINDS', 'AblationVariant', 'ablation_harness', 'ablation_suite', 'embed_cells',
    'run_ablation', 'summarize', 'train_variants',
]
