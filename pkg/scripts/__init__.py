"""
Utility scripts.
"""

from .config_utils import RunConfig, load_config, require
from .errors import (
    ConfigError,
    DegenerateMaskError,
    EmptyResultError,
    NumericFailureError,
    ParseError,
    SparseCellError,
    ValidationError,
)
from .logging_utils import setup_logging
from .run_exporter import RunExporter
from .seeding import derive_seed, seed_everything

__all__ = [
    'RunConfig', 'load_config', 'require',
    'ConfigError', 'DegenerateMaskError', 'EmptyResultError', 'NumericFailureError',
    'ParseError', 'SparseCellError', 'ValidationError',
    'setup_logging', 'RunExporter', 'derive_seed', 'seed_everything',
]
