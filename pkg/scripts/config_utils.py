"""
Configuration loading: YAML file, environment overrides, required keys.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml

from .errors import ConfigError

ENV_PREFIX = "SPARSECELL__"

# Model presets that a run config may reference by name
KNOWN_PRESETS = ('tiny-test', 'small-test', '3M', '10M', '100M')


def load_config(config_path: str = "config.yaml") -> dict:
    """Loads configuration from a YAML file and applies environment overrides."""
    with open(config_path, 'r', encoding='utf-8') as f:
        config = yaml.safe_load(f) or {}
    return apply_env_overrides(config)


def apply_env_overrides(config: dict, environ: Optional[Dict[str, str]] = None) -> dict:
    """
    Applies SPARSECELL__<SECTION>__<KEY>=value overrides.

    Nested keys use further double underscores. Values are parsed as YAML
    scalars so numbers and booleans keep their type.
    """
    if environ is None:
        environ = dict(os.environ)

    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = [part.lower() for part in name[len(ENV_PREFIX):].split('__') if part]
        if not path:
            continue
        node = config
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = yaml.safe_load(raw)
    return config


def require(config: dict, dotted_key: str) -> Any:
    """
    Returns config[a][b]... for 'a.b', raising ConfigError naming the key.
    """
    node: Any = config
    for part in dotted_key.split('.'):
        if not isinstance(node, dict) or part not in node or node[part] is None:
            raise ConfigError(dotted_key)
        node = node[part]
    return node


def require_all(config: dict, dotted_keys: Iterable[str]) -> None:
    for key in dotted_keys:
        require(config, key)


@dataclass
class RunConfig:
    """Everything one CLI run needs, split by section."""

    name: str
    seed: int
    output_dir: str
    data: Dict[str, Any] = field(default_factory=dict)
    model: Dict[str, Any] = field(default_factory=dict)
    masking: Dict[str, Any] = field(default_factory=dict)
    training: Dict[str, Any] = field(default_factory=dict)
    evaluation: Dict[str, Any] = field(default_factory=dict)
    logging: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, config: dict, required: Iterable[str] = ()) -> 'RunConfig':
        require_all(config, ['run.name', 'run.seed', *required])
        run = config['run']
        run_config = cls(
            name=str(run['name']),
            seed=int(run['seed']),
            output_dir=str(run.get('output_dir', 'runs')),
            data=config.get('data') or {},
            model=config.get('model') or {},
            masking=config.get('masking') or {},
            training=config.get('training') or {},
            evaluation=config.get('evaluation') or {},
            logging=config.get('logging') or {},
        )
        run_config.validate()
        return run_config

    def validate(self):
        preset = self.model.get('preset')
        if preset is not None and preset not in KNOWN_PRESETS:
            raise ConfigError(
                'model.preset',
                f"Unknown preset '{preset}'. Available: {', '.join(KNOWN_PRESETS)}"
            )
        for key in ('matrix', 'labels'):
            path = self.data.get(key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f'data.{key}', f"Path in 'data.{key}' does not exist: {path}")

    @property
    def run_dir(self) -> Path:
        return Path(self.output_dir) / self.name

    def to_dict(self) -> dict:
        return {
            'run': {'name': self.name, 'seed': self.seed, 'output_dir': self.output_dir},
            'data': self.data,
            'model': self.model,
            'masking': self.masking,
            'training': self.training,
            'evaluation': self.evaluation,
            'logging': self.logging,
        }
