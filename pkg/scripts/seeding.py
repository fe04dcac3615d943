"""
Labelled random streams derived from one root seed.
"""

import hashlib
import random

import numpy as np
import torch


def derive_seed(root_seed: int, label: str) -> int:
    """
    Derives an independent 32-bit seed for a named stream.

    Args:
        root_seed: Run-level seed
        label: Stream name ('data', 'mask', ...)

    Returns:
        Seed that only depends on (root_seed, label)
    """
    digest = hashlib.sha256(f"{int(root_seed)}:{label}".encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'little')


def cell_rng(seed: int, cell_index: int, epoch: int = 0) -> np.random.Generator:
    """RNG for one cell, independent of thread schedule and batch order."""
    return np.random.default_rng([int(seed), int(epoch), int(cell_index)])


def seed_everything(seed: int) -> None:
    """Seeds python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
