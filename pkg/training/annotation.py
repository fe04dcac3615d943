"""
Cell-type annotation: max-pooled cell embeddings followed by a linear layer.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.metrics import f1_score, precision_score

from expression.matrix import SparseExpressionMatrix
from masking.mask_plan import unmasked_cells
from model.asymmetric import MaskedExpressionModel
from scripts.errors import ValidationError
from scripts.seeding import derive_seed
from .trainer import collate_for, split_cells

logger = logging.getLogger(__name__)

ANNOTATION_SPLIT = (0.8, 0.1, 0.1)


@dataclass
class FinetuneConfig:
    epochs: int = 50
    learning_rate: float = 1e-2
    batch_size: int = 64
    freeze_trunk: bool = True
    seed: int = 0
    split: Tuple[float, float, float] = ANNOTATION_SPLIT

    @classmethod
    def from_dict(cls, config: Optional[Dict]) -> 'FinetuneConfig':
        known = {f.name for f in fields(cls)}
        cfg = cls(**{k: v for k, v in (config or {}).items() if k in known})
        cfg.split = tuple(float(s) for s in cfg.split)
        return cfg


@dataclass
class AnnotationResult:
    classes: List[str]
    macro_precision: float
    macro_f1: float
    val_macro_f1: float
    predictions: List[str] = field(default_factory=list)
    test_labels: List[str] = field(default_factory=list)
    head: Optional[nn.Module] = field(default=None, repr=False)

    def to_dict(self) -> Dict:
        return {'classes': self.classes, 'macro_precision': self.macro_precision,
                'macro_f1': self.macro_f1, 'val_macro_f1': self.val_macro_f1}


def encode_labels(labels: Sequence[str], train_idx: np.ndarray) -> Tuple[List[str], np.ndarray]:
    """Class list and integer codes; every class must occur in the training split."""
    classes = sorted(set(labels))
    present = {labels[i] for i in train_idx}
    missing = [c for c in classes if c not in present]
    if missing:
        raise ValidationError(f"Classes absent from the training split: {', '.join(missing)}")
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[l] for l in labels], dtype=np.int64)


def macro_scores(truth: np.ndarray, predicted: np.ndarray) -> Tuple[float, float]:
    precision = precision_score(truth, predicted, average='macro', zero_division=0)
    f1 = f1_score(truth, predicted, average='macro', zero_division=0)
    return float(precision), float(f1)


def train_linear_head(embeddings: torch.Tensor, targets: torch.Tensor, n_classes: int,
                      epochs: int = 50, learning_rate: float = 1e-2, batch_size: int = 64,
                      seed: int = 0) -> nn.Linear:
    """Cross-entropy training of a linear classifier on fixed embeddings."""
    generator = torch.Generator().manual_seed(seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        head = nn.Linear(embeddings.shape[1], n_classes).to(embeddings.dtype)
    optimizer = torch.optim.Adam(head.parameters(), lr=learning_rate)
    n = embeddings.shape[0]
    for _ in range(epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss = F.cross_entropy(head(embeddings[idx]), targets[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    return head


class AnnotationClassifier(nn.Module):
    """Trunk embeddings (max-pooled) plus a linear layer."""

    def __init__(self, trunk: MaskedExpressionModel, n_classes: int, embed_dim: int):
        super().__init__()
        self.trunk = trunk
        self.head = nn.Linear(embed_dim, n_classes)

    def forward(self, batch) -> torch.Tensor:
        return self.head(self.trunk.embed(batch))


def _batches(matrix: SparseExpressionMatrix, model: MaskedExpressionModel,
             cell_indices: Sequence[int], batch_size: int):
    collate = collate_for(model)
    cells = unmasked_cells(matrix, cell_indices)
    for start in range(0, len(cells), batch_size):
        yield collate(cells[start:start + batch_size])


@torch.no_grad()
def pooled_embeddings(model: MaskedExpressionModel, matrix: SparseExpressionMatrix,
                      cell_indices: Optional[Sequence[int]] = None, batch_size: int = 64) -> torch.Tensor:
    """[cells, dim] max-pooled embeddings of unmasked cells."""
    if cell_indices is None:
        cell_indices = range(matrix.n_cells)
    was_training = model.training
    model.eval()
    chunks = [model.embed(batch) for batch in _batches(matrix, model, list(cell_indices), batch_size)]
    model.train(was_training)
    return torch.cat(chunks)


def finetune_annotation(model: MaskedExpressionModel, matrix: SparseExpressionMatrix,
                        labels: Sequence[str], cfg: Optional[FinetuneConfig] = None) -> AnnotationResult:
    """
    Trains a cell-type classifier on top of a (pre-trained or fresh) trunk.

    Cells are split 8:1:1; macro precision and macro F1 are reported on the
    test split.
    """
    cfg = cfg or FinetuneConfig()
    if len(labels) != matrix.n_cells:
        raise ValidationError(f"{len(labels)} labels for {matrix.n_cells} cells")
    train_idx, val_idx, test_idx = split_cells(matrix.n_cells, cfg.split, derive_seed(cfg.seed, 'split'))
    classes, codes = encode_labels(list(labels), train_idx)
    targets = torch.as_tensor(codes)
    train_t, val_t, test_t = (torch.as_tensor(i, dtype=torch.long) for i in (train_idx, val_idx, test_idx))

    if cfg.freeze_trunk:
        embeddings = pooled_embeddings(model, matrix, batch_size=cfg.batch_size)
        head = train_linear_head(embeddings[train_t], targets[train_t], len(classes),
                                 cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.seed)
        with torch.no_grad():
            val_pred = head(embeddings[val_t]).argmax(dim=1).numpy()
            test_pred = head(embeddings[test_t]).argmax(dim=1).numpy()
    else:
        embed_dim = model.config.encoder.dim
        classifier = AnnotationClassifier(model, len(classes), embed_dim)
        optimizer = torch.optim.Adam(classifier.parameters(), lr=cfg.learning_rate)
        rng = np.random.default_rng(derive_seed(cfg.seed, 'data'))
        classifier.train()
        for _ in range(cfg.epochs):
            order = rng.permutation(train_idx)
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                batch = next(_batches(matrix, model, idx, len(idx)))
                loss = F.cross_entropy(classifier(batch), targets[torch.as_tensor(idx, dtype=torch.long)])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
        classifier.eval()
        head = classifier.head
        with torch.no_grad():
            val_pred = torch.cat([classifier(b) for b in _batches(matrix, model, val_idx, cfg.batch_size)]).argmax(1).numpy()
            test_pred = torch.cat([classifier(b) for b in _batches(matrix, model, test_idx, cfg.batch_size)]).argmax(1).numpy()

    precision, f1 = macro_scores(codes[test_idx], test_pred)
    _, val_f1 = macro_scores(codes[val_idx], val_pred)
    logger.info(f"Annotation: macro precision {precision:.3f}, macro F1 {f1:.3f} on {len(test_idx)} test cells")
    return AnnotationResult(
        classes=classes,
        macro_precision=precision,
        macro_f1=f1,
        val_macro_f1=val_f1,
        predictions=[classes[i] for i in test_pred],
        test_labels=[classes[i] for i in codes[test_idx]],
        head=head,
    )
