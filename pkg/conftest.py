"""Shared fixtures and the --runslow switch."""

import numpy as np
import pytest

from expression import SparseExpressionMatrix, Stage, SyntheticSpec, normalize, synthesize_dataset
from masking import MaskPlan, apply_mask
from model import ModelConfig, StackConfig

# Two cells x ten genes, normalized values
EXAMPLE_VALUES = np.array([
    [0.3, 2.1, 0.0, 4.5, 0.0, 7.3, 8.9, 0.0, 3.4, 2.5],
    [1.1, 0.0, 0.0, 3.4, 2.3, 0.7, 0.0, 0.0, 2.9, 0.0],
])
# Masked gene positions per cell (0-based): C1 -> G1, G5, G8; C2 -> G2, G3, G6, G7
EXAMPLE_MASKS = ([0, 4, 7], [1, 2, 5, 6])


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the multi-minute training acceptance tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: multi-minute training run (needs --runslow)')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def example_matrix():
    """The two-cell worked example of filter-and-pack."""
    return SparseExpressionMatrix.from_dense(EXAMPLE_VALUES, Stage.NORMALIZED)


@pytest.fixture
def example_cells(example_matrix):
    """The worked example masked at its documented positions (all [MASK] tokens)."""
    cells = []
    for i, positions in enumerate(EXAMPLE_MASKS):
        row = example_matrix.row(i)
        cells.append(apply_mask(row, MaskPlan.from_positions(row, positions)))
    return cells


@pytest.fixture(scope='session')
def synthetic_raw():
    """Small labelled raw-count dataset (5 types)."""
    return synthesize_dataset(SyntheticSpec(n_cells=120, n_genes=64, n_cell_types=5, sparsity=0.7, seed=3))


@pytest.fixture(scope='session')
def synthetic_data(synthetic_raw):
    """(normalized matrix, labels) of the small synthetic dataset."""
    raw, labels = synthetic_raw
    return normalize(raw), labels


@pytest.fixture
def tiny_config():
    """Smallest useful model over 64 genes."""
    return ModelConfig(
        encoder=StackConfig(depth=1, heads=2, dim=16),
        decoder=StackConfig(depth=1, heads=2, dim=16),
        n_genes=64,
        bins=16,
        seed=0,
        preset='tiny-test',
    )
