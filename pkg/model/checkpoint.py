"""
Versioned checkpoint format: config echo plus named tensors with shape headers.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import torch

from scripts.errors import ValidationError
from .asymmetric import MaskedExpressionModel, build_model
from .config import ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = 'SPARSECELL-CKPT'
CHECKPOINT_VERSION = 1


def save_checkpoint(model: MaskedExpressionModel, path: Union[str, Path],
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Writes a checkpoint file.

    Args:
        model: Model to save
        path: Target file
        extra: Additional JSON-like payload (step, metrics, ...)

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {name: tensor.detach().cpu() for name, tensor in model.state_dict().items()}
    payload = {
        'magic': CHECKPOINT_MAGIC,
        'version': CHECKPOINT_VERSION,
        'config': model.config.to_dict(),
        'shapes': {name: list(tensor.shape) for name, tensor in state.items()},
        'state_dict': state,
        'extra': extra or {},
    }
    torch.save(payload, path)
    logger.info(f"Checkpoint saved: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[MaskedExpressionModel, Dict[str, Any]]:
    """
    Reads a checkpoint and rebuilds the model.

    Returns:
        (model, extra payload)
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Checkpoint not found: {path}")
    payload = torch.load(path, map_location='cpu', weights_only=False)
    if not isinstance(payload, dict) or payload.get('magic') != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path} is not a sparsecell checkpoint")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise ValidationError(
            f"Unsupported checkpoint version {payload.get('version')} (expected {CHECKPOINT_VERSION})"
        )

    state = payload['state_dict']
    for name, shape in payload['shapes'].items():
        if name not in state or list(state[name].shape) != list(shape):
            raise ValidationError(f"Checkpoint tensor '{name}' does not match its shape header {shape}")

    model = build_model(ModelConfig.from_checkpoint_dict(payload['config']))
    model.load_state_dict(state)
    return model, payload.get('extra', {})
