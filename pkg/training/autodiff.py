"""
Reverse-mode gradients and a central finite-difference checker.
"""

import logging
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np
import torch

logger = logging.getLogger(__name__)


def grad(loss: torch.Tensor, parameters: Iterable[torch.Tensor],
         retain_graph: bool = False) -> List[torch.Tensor]:
    """
    Gradients of a scalar loss with respect to parameters.

    Parameters that do not influence the loss (or do not require gradients)
    get a zero gradient instead of an error.
    """
    params = list(parameters)
    tracked = [p for p in params if p.requires_grad]
    grads = torch.autograd.grad(loss, tracked, allow_unused=True, retain_graph=retain_graph) if tracked else []
    by_id = {id(p): g for p, g in zip(tracked, grads)}
    result = []
    for p in params:
        g = by_id.get(id(p))
        result.append(torch.zeros_like(p) if g is None else g)
    return result


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    """Norm-wise relative error ||a - b|| / max(||a||, ||b||)."""
    scale = max(float(a.norm()), float(b.norm()))
    if scale == 0.0:
        return 0.0
    return float((a - b).norm()) / scale


def finite_difference_grad(loss_fn: Callable[[], torch.Tensor], param: torch.Tensor,
                           h: float = 1e-3, entries: Optional[np.ndarray] = None) -> torch.Tensor:
    """
    Central differences of loss_fn with respect to (a subset of) one parameter.

    The step is relative: h * max(1, |p_i|). Entries not checked are left at 0.
    """
    numeric = torch.zeros_like(param)
    flat = param.data.view(-1)
    out = numeric.view(-1)
    if entries is None:
        entries = np.arange(flat.numel())
    with torch.no_grad():
        for i in entries:
            original = float(flat[i])
            step = h * max(1.0, abs(original))
            flat[i] = original + step
            plus = float(loss_fn())
            flat[i] = original - step
            minus = float(loss_fn())
            flat[i] = original
            out[i] = (plus - minus) / (2.0 * step)
    return numeric


def gradient_check(loss_fn: Callable[[], torch.Tensor], named_parameters: Dict[str, torch.Tensor],
                   h: float = 1e-3, max_entries: Optional[int] = None, seed: int = 0) -> Dict[str, float]:
    """
    Compares autograd gradients to central finite differences, per parameter.

    Args:
        loss_fn: Recomputes the scalar loss from the current parameter values
        named_parameters: Parameters to check (use float64)
        h: Relative finite-difference step
        max_entries: Probe at most this many entries per parameter
        seed: Entry sampling seed

    Returns:
        Relative error per parameter name
    """
    names = list(named_parameters)
    params = [named_parameters[n] for n in names]
    analytic = grad(loss_fn(), params)
    rng = np.random.default_rng(seed)

    errors = {}
    for name, param, g in zip(names, params, analytic):
        entries = None
        if max_entries is not None and param.numel() > max_entries:
            entries = np.sort(rng.choice(param.numel(), size=max_entries, replace=False))
        numeric = finite_difference_grad(loss_fn, param, h, entries)
        if entries is not None:
            checked = torch.zeros(param.numel(), dtype=torch.bool)
            checked[torch.as_tensor(entries)] = True
            g = g.reshape(-1)[checked]
            numeric = numeric.reshape(-1)[checked]
        errors[name] = relative_error(g.detach(), numeric)
        logger.debug(f"gradcheck {name}: relative error {errors[name]:.2e}")
    return errors
