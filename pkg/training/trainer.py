"""
Masked-regression pre-training loop.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.optim.lr_scheduler import LambdaLR
from torch.utils.data import DataLoader
from tqdm import tqdm

from expression.matrix import SparseExpressionMatrix
from masking.mask_plan import MaskConfig
from model.asymmetric import MaskedExpressionModel
from model.checkpoint import save_checkpoint
from packing.bucketing import MaskedCellDataset, make_loader
from packing.packer import filter_and_pack, pack_full_sequence
from scripts.errors import NumericFailureError, ValidationError
from scripts.run_exporter import RunExporter
from scripts.seeding import derive_seed, seed_everything
from .loss import LOSS_DENOMINATORS, LossReport, batch_loss

logger = logging.getLogger(__name__)

PRETRAIN_SPLIT = (0.96, 0.02, 0.02)
LR_SCHEDULES = ('constant', 'cosine')


@dataclass
class TrainConfig:
    batch_size: int = 32
    steps: Optional[int] = None          # overrides epochs when set
    epochs: int = 1
    learning_rate: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: Optional[float] = None
    warmup_steps: int = 0
    lr_schedule: str = 'constant'       # after warmup: constant or cosine decay to min_lr_ratio
    min_lr_ratio: float = 0.1
    redraw_every: int = 0                # steps between random-feature redraws, 0 = never
    seed: int = 0
    eval_every: int = 100
    num_workers: int = 0
    loss_denominator: str = 'masked'
    split: Tuple[float, float, float] = PRETRAIN_SPLIT
    show_progress: bool = True

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.split = tuple(float(s) for s in self.split)
        self.validate()

    @classmethod
    def from_dict(cls, config: Optional[Dict]) -> 'TrainConfig':
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (config or {}).items() if k in known})

    def validate(self):
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValidationError(f"learning_rate must be a finite non-negative number, got {self.learning_rate}")
        if self.steps is not None and self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.epochs < 1 or self.eval_every < 1:
            raise ValidationError("epochs and eval_every must be >= 1")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValidationError(f"lr_schedule must be one of {LR_SCHEDULES}, got {self.lr_schedule}")
        if not 0.0 <= self.min_lr_ratio <= 1.0:
            raise ValidationError(f"min_lr_ratio must be in [0, 1], got {self.min_lr_ratio}")
        if self.redraw_every < 0 or self.warmup_steps < 0:
            raise ValidationError("redraw_every and warmup_steps must be >= 0")
        if self.loss_denominator not in LOSS_DENOMINATORS:
            raise ValidationError(f"loss_denominator must be one of {LOSS_DENOMINATORS}")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValidationError(f"split must be three fractions summing to 1, got {self.split}")

    def to_dict(self) -> Dict:
        return asdict(self)


def split_cells(n_cells: int, fractions: Sequence[float], seed: int) -> List[np.ndarray]:
    """
    Seeded random split of cell indices.

    Every split with a positive fraction gets at least one cell when
    there are enough cells; the first split takes the remainder.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_cells)
    sizes = [int(math.floor(f * n_cells)) for f in fractions]
    for i in range(1, len(sizes)):
        if fractions[i] > 0 and sizes[i] == 0 and n_cells >= len(fractions):
            sizes[i] = 1
    sizes[0] = n_cells - sum(sizes[1:])
    if sizes[0] < 1:
        raise ValidationError(f"Not enough cells ({n_cells}) for split {tuple(fractions)}")
    bounds = np.cumsum([0] + sizes)
    return [np.sort(order[bounds[i]:bounds[i + 1]]) for i in range(len(sizes))]


def collate_for(model: MaskedExpressionModel):
    return pack_full_sequence if model.config.architecture == 'encoder_only' else filter_and_pack


def warmup_factor(warmup_steps: int, total_steps: Optional[int] = None, schedule: str = 'constant',
                  min_ratio: float = 0.1):
    """
    Learning-rate multiplier: linear warmup, then constant or cosine decay.

    The cosine branch reaches min_ratio at total_steps and stays there.
    """
    def factor(step: int) -> float:
        if warmup_steps > 0 and step < warmup_steps:
            return (step + 1) / warmup_steps
        if schedule != 'cosine' or not total_steps or total_steps <= warmup_steps:
            return 1.0
        progress = min(1.0, (step - warmup_steps) / (total_steps - warmup_steps))
        return min_ratio + 0.5 * (1.0 - min_ratio) * (1.0 + math.cos(math.pi * progress))
    return factor


@torch.no_grad()
def evaluate_loss(model: MaskedExpressionModel, loader: DataLoader,
                  denominator: str = 'masked') -> LossReport:
    """Masked MSE pooled over every masked position of the loader."""
    was_training = model.training
    model.eval()
    reports = [batch_loss(model(batch), batch, denominator) for batch in loader]
    model.train(was_training)
    return LossReport.combine(reports)


@dataclass
class TrainResult:
    history: List[Dict] = field(default_factory=list)
    initial_val_mse: float = float('nan')
    final_val_mse: float = float('nan')
    steps: int = 0
    checkpoint: Optional[Path] = None
    split: Dict[str, List[int]] = field(default_factory=dict)

    def val_curve(self) -> List[float]:
        return [row['masked_mse'] for row in self.history if row['split'] == 'val']

    def held_out(self) -> List[int]:
        """Validation and test cells, none of which the optimizer has seen."""
        return sorted(self.split.get('val', []) + self.split.get('test', []))


def redraw_features(model: MaskedExpressionModel, seed: int) -> int:
    """Redraws the model's random attention features, if it has any."""
    redrawn = model.redraw_features(seed)
    if redrawn:
        logger.debug(f"Redrew random features of {redrawn} attention blocks (seed {seed})")
    return redrawn


def pretrain(model: MaskedExpressionModel, matrix: SparseExpressionMatrix, mask_cfg: MaskConfig,
             train_cfg: TrainConfig, exporter: Optional[RunExporter] = None) -> TrainResult:
    """
    Pre-trains on masked-value recovery.

    Cells are split 96:2:2 (configurable) into train/validation/test.
    Validation masks are frozen for the whole run. With redraw_every set, the
    random attention features are redrawn every redraw_every steps from a
    step-labelled seed. When an exporter is given,
    metrics go to its CSV and checkpoints to its directory: `last_good.pt` after
    each validation pass, `final.pt` at the end.

    Args:
        model: Model to train (in place)
        matrix: Normalized expression matrix
        mask_cfg: Masking configuration
        train_cfg: Optimization settings
        exporter: Run directory writer (optional)

    Returns:
        TrainResult with the metrics history
    """
    seed_everything(train_cfg.seed)
    train_idx, val_idx, test_idx = split_cells(matrix.n_cells, train_cfg.split,
                                               derive_seed(train_cfg.seed, 'split'))
    result = TrainResult(split={'train': train_idx.tolist(), 'val': val_idx.tolist(), 'test': test_idx.tolist()})
    logger.info(f"Split {matrix.n_cells} cells: {len(train_idx)} train / {len(val_idx)} val / {len(test_idx)} test")

    train_rows = np.isin(matrix.cells, train_idx)
    model.fit_value_encoder(matrix.values[train_rows])

    collate = collate_for(model)
    train_set = MaskedCellDataset(matrix, mask_cfg, train_idx)
    val_set = MaskedCellDataset(matrix, mask_cfg, val_idx, frozen=True)
    train_loader = make_loader(train_set, train_cfg.batch_size, shuffle=True,
                               seed=derive_seed(train_cfg.seed, 'data'),
                               num_workers=train_cfg.num_workers, collate_fn=collate)
    val_loader = make_loader(val_set, train_cfg.batch_size, shuffle=False, collate_fn=collate)

    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.learning_rate, betas=train_cfg.betas,
                                 eps=train_cfg.eps, weight_decay=train_cfg.weight_decay)
    total_steps = train_cfg.steps or train_cfg.epochs * len(train_loader)
    scheduler = LambdaLR(optimizer, warmup_factor(train_cfg.warmup_steps, total_steps,
                                                  train_cfg.lr_schedule, train_cfg.min_lr_ratio))

    def record(step: int, split: str, report: LossReport, lr: float):
        row = {'step': step, 'split': split, 'masked_mse': report.masked_mse,
               'nz_mse': report.masked_nonzero_mse, 'z_mse': report.masked_zero_mse, 'lr': lr}
        result.history.append(row)
        if exporter is not None:
            exporter.add_metrics(**row)

    def validate(step: int):
        report = evaluate_loss(model, val_loader, train_cfg.loss_denominator)
        record(step, 'val', report, optimizer.param_groups[0]['lr'])
        if exporter is not None:
            save_checkpoint(model, exporter.artifact_path('last_good.pt'), {'step': step})
        return report

    result.initial_val_mse = validate(0).masked_mse
    model.train()
    step, epoch = 0, 0
    progress = tqdm(total=total_steps, desc='pretrain', disable=not train_cfg.show_progress)
    try:
        while step < total_steps:
            train_set.set_epoch(epoch)
            train_loader.batch_sampler.set_epoch(epoch)
            for batch in train_loader:
                lr = optimizer.param_groups[0]['lr']
                report = batch_loss(model(batch), batch, train_cfg.loss_denominator)
                if not torch.isfinite(report.loss):
                    raise NumericFailureError('loss')
                optimizer.zero_grad()
                report.loss.backward()
                if train_cfg.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
                optimizer.step()
                scheduler.step()
                step += 1
                record(step, 'train', report, lr)
                if train_cfg.redraw_every and step % train_cfg.redraw_every == 0:
                    redraw_features(model, derive_seed(train_cfg.seed, f"features/{step}"))
                progress.update(1)
                progress.set_postfix(masked_mse=f"{report.masked_mse:.4f}")

                if step % train_cfg.eval_every == 0 or step == total_steps:
                    result.final_val_mse = validate(step).masked_mse
                if step >= total_steps:
                    break
            epoch += 1
    except NumericFailureError as e:
        last_good = exporter.artifact_path('last_good.pt') if exporter is not None else None
        logger.error(f"Training aborted at step {step}: {e}. Last good checkpoint: {last_good}")
        result.checkpoint = last_good
        raise
    finally:
        progress.close()
        if exporter is not None:
            exporter.save_metrics_csv()

    result.steps = step
    if exporter is not None:
        result.checkpoint = save_checkpoint(model, exporter.artifact_path('final.pt'),
                                            {'step': step, 'val_masked_mse': result.final_val_mse})
    logger.info(f"Pre-training done: val masked MSE {result.initial_val_mse:.4f} -> {result.final_val_mse:.4f}")
    return result
