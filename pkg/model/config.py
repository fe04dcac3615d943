"""
Model configuration and size presets.
"""

from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional

from expression.matrix import REFERENCE_GENE_COUNT
from scripts.errors import ConfigError, ValidationError
from scripts.seeding import derive_seed

ATTENTION_BACKENDS = ('exact', 'linear_random_features')
ARCHITECTURES = ('asymmetric', 'encoder_only')
OBJECTIVES = ('regression', 'classification')
VALUE_ENCODERS = ('auto_discretization', 'round_zero', 'round_floor', 'up_no_zero', 'equal_freq')


@dataclass
class StackConfig:
    depth: int
    heads: int
    dim: int

    def validate(self, name: str):
        if self.depth < 0:
            raise ValidationError(f"{name}.depth must be >= 0, got {self.depth}")
        if self.heads < 1 or self.dim < 1:
            raise ValidationError(f"{name}.heads and {name}.dim must be positive")
        if self.dim % self.heads != 0:
            raise ValidationError(f"{name}.dim {self.dim} is not divisible by {name}.heads {self.heads}")


@dataclass
class ModelConfig:
    """
    Architecture hyper-parameters.

    attention_backend selects the decoder backend (and the encoder-only stack's);
    the encoder over packed survivors uses encoder_backend, exact by default.
    """

    encoder: StackConfig
    decoder: StackConfig
    n_genes: int = REFERENCE_GENE_COUNT
    bins: int = 100
    attention_backend: str = 'exact'
    encoder_backend: str = 'exact'
    n_random_features: int = 256
    orthogonal_features: bool = False
    ffn_multiplier: int = 4
    seed: int = 0
    architecture: str = 'asymmetric'
    value_encoder: str = 'auto_discretization'
    discretizer_bias: bool = False
    leak: float = 0.01
    objective: str = 'regression'
    n_classes: int = 16
    preset: Optional[str] = None

    @classmethod
    def from_preset(cls, name: str, **overrides) -> 'ModelConfig':
        if name not in PRESETS:
            raise ConfigError('model.preset', f"Unknown model preset '{name}'. Available: {', '.join(PRESETS)}")
        return replace(PRESETS[name], preset=name, **overrides)

    @classmethod
    def from_dict(cls, config: Optional[Dict]) -> 'ModelConfig':
        """
        Builds a config from the `model:` section.

        Args:
            config: Dict with an optional 'preset' plus overrides; 'encoder' and
                    'decoder' may be partial dicts

        Returns:
            Validated ModelConfig
        """
        config = dict(config or {})
        preset = config.pop('preset', 'tiny-test')
        base = cls.from_preset(preset)
        encoder = _merge_stack(base.encoder, config.pop('encoder', None))
        decoder = _merge_stack(base.decoder, config.pop('decoder', None))
        known = {f for f in cls.__dataclass_fields__} - {'encoder', 'decoder', 'preset'}
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"model.{sorted(unknown)[0]}", f"Unknown model keys: {', '.join(sorted(unknown))}")
        cfg = replace(base, encoder=encoder, decoder=decoder, **config)
        cfg.validate()
        return cfg

    def validate(self):
        self.encoder.validate('encoder')
        self.decoder.validate('decoder')
        if self.n_genes < 1:
            raise ValidationError(f"n_genes must be positive, got {self.n_genes}")
        if self.bins < 2:
            raise ValidationError(f"bins must be >= 2, got {self.bins}")
        if self.attention_backend not in ATTENTION_BACKENDS or self.encoder_backend not in ATTENTION_BACKENDS:
            raise ValidationError(
                f"attention backends must be one of {ATTENTION_BACKENDS}, "
                f"got {self.encoder_backend}/{self.attention_backend}"
            )
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture}")
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"objective must be one of {OBJECTIVES}, got {self.objective}")
        if self.value_encoder not in VALUE_ENCODERS:
            raise ValidationError(f"value_encoder must be one of {VALUE_ENCODERS}, got {self.value_encoder}")
        if self.n_random_features < 1 or self.ffn_multiplier < 1:
            raise ValidationError("n_random_features and ffn_multiplier must be positive")
        if self.objective == 'classification' and self.n_classes < 2:
            raise ValidationError(f"classification needs n_classes >= 2, got {self.n_classes}")

    def attention_config(self, backend: str, stage: str = 'encoder') -> Dict:
        """Backend settings for one stack; layers derive their own feature seeds from it."""
        return {
            'backend': backend,
            'n_random_features': self.n_random_features,
            'orthogonal_features': self.orthogonal_features,
            'feature_seed': feature_seed(self.seed, stage),
        }

    def value_encoder_config(self) -> Dict:
        return {
            'backend': self.value_encoder,
            'bins': self.bins,
            'leak': self.leak,
            'bias': self.discretizer_bias,
        }

    @property
    def head_outputs(self) -> int:
        return self.n_classes if self.objective == 'classification' else 1

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_checkpoint_dict(cls, data: Dict) -> 'ModelConfig':
        data = dict(data)
        data['encoder'] = StackConfig(**data['encoder'])
        data['decoder'] = StackConfig(**data['decoder'])
        cfg = cls(**data)
        cfg.validate()
        return cfg


def _merge_stack(base: StackConfig, overrides: Optional[Dict]) -> StackConfig:
    if not overrides:
        return base
    return replace(base, **{k: int(v) for k, v in overrides.items()})


def feature_seed(seed: int, stage: str) -> int:
    """Random-feature seed of one stack ('encoder' or 'decoder')."""
    return derive_seed(seed, f"features/{stage}")


PRESETS: Dict[str, ModelConfig] = {
    'tiny-test': ModelConfig(encoder=StackConfig(1, 2, 16), decoder=StackConfig(1, 2, 16),
                             n_genes=64, bins=16),
    'small-test': ModelConfig(encoder=StackConfig(2, 4, 64), decoder=StackConfig(1, 2, 64),
                              n_genes=200, bins=50),
    '3M': ModelConfig(encoder=StackConfig(4, 2, 128), decoder=StackConfig(2, 2, 128)),
    '10M': ModelConfig(encoder=StackConfig(4, 8, 256), decoder=StackConfig(2, 4, 256)),
    '100M': ModelConfig(encoder=StackConfig(12, 12, 768), decoder=StackConfig(6, 8, 512)),
}
