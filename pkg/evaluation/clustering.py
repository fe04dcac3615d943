"""
Clustering of pooled cell embeddings and clustering-quality metrics.

Cells are clustered with k-means at the known number of cell types; the
metrics compare the clusters to the ground-truth labels (ARI, NMI,
homogeneity, completeness) and measure their geometric separation
(silhouette, Euclidean).
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import (
    adjusted_rand_score,
    completeness_score,
    homogeneity_score,
    normalized_mutual_info_score,
    silhouette_score,
)

from scripts.errors import ValidationError

logger = logging.getLogger(__name__)

METRIC_NAMES = ('ARI', 'NMI', 'HOMO', 'CP', 'SIL')


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    k: int
    metrics: Dict[str, float] = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)

    def row(self) -> Dict[str, float]:
        return {name: self.metrics[name] for name in METRIC_NAMES}


def cluster_cells(embeddings: np.ndarray, k: int, seed: int = 0, n_init: int = 10) -> np.ndarray:
    """
    k-means with k-means++ seeding.

    Args:
        embeddings: [cells, dim]
        k: Number of clusters (>= 2)
        seed: Random state

    Returns:
        Cluster id per cell
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise ValidationError(f"Embeddings must be 2-D, got shape {embeddings.shape}")
    if k < 2:
        raise ValidationError(f"Need at least 2 clusters, got k={k}")
    if embeddings.shape[0] < k:
        raise ValidationError(f"Cannot form {k} clusters from {embeddings.shape[0]} cells")
    with warnings.catch_warnings():
        # Fewer distinct points than clusters is reported through the metric flags
        warnings.simplefilter('ignore', ConvergenceWarning)
        kmeans = KMeans(n_clusters=k, init='k-means++', n_init=n_init, random_state=seed)
        return kmeans.fit_predict(embeddings)


def clustering_metrics(assignments: Sequence[int], labels: Sequence, embeddings: Optional[np.ndarray] = None):
    """
    ARI, NMI (arithmetic normalization), homogeneity, completeness and silhouette.

    Returns:
        (metrics, flags). flags['single_cluster'] marks HOMO/CP computed on a
        single predicted cluster; flags['silhouette_degenerate'] marks an undefined
        or meaningless silhouette (reported as NaN or 0).
    """
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape[0] != labels.shape[0]:
        raise ValidationError(f"{assignments.shape[0]} assignments for {labels.shape[0]} labels")

    n_clusters = len(np.unique(assignments))
    metrics = {
        'ARI': float(adjusted_rand_score(labels, assignments)),
        'NMI': float(normalized_mutual_info_score(labels, assignments, average_method='arithmetic')),
        'HOMO': float(homogeneity_score(labels, assignments)),
        'CP': float(completeness_score(labels, assignments)),
        'SIL': float('nan'),
    }
    flags = {'single_cluster': n_clusters < 2, 'silhouette_degenerate': True}

    if embeddings is not None:
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.shape[0] != assignments.shape[0]:
            raise ValidationError(f"{embeddings.shape[0]} embeddings for {assignments.shape[0]} assignments")
        identical = bool(np.all(np.ptp(embeddings, axis=0) == 0))
        if 2 <= n_clusters <= assignments.shape[0] - 1:
            metrics['SIL'] = float(silhouette_score(embeddings, assignments, metric='euclidean'))
            flags['silhouette_degenerate'] = identical
        if flags['silhouette_degenerate']:
            logger.warning("Silhouette is degenerate (single cluster or identical embeddings)")
    if flags['single_cluster']:
        logger.warning("All cells fell into one cluster; homogeneity/completeness are degenerate")
    return metrics, flags


def evaluate_embeddings(embeddings: np.ndarray, labels: Sequence, seed: int = 0,
                        k: Optional[int] = None) -> ClusteringResult:
    """Clusters at k = number of label classes (unless given) and scores the result."""
    k = k or len(set(labels))
    assignments = cluster_cells(embeddings, k, seed)
    metrics, flags = clustering_metrics(assignments, labels, embeddings)
    return ClusteringResult(assignments=assignments, k=k, metrics=metrics, flags=flags)
