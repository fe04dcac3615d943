"""
Name -> class registry for the swappable model components.

Transformer blocks ask for an attention kernel ('exact',
'linear_random_features') and the models ask for a value encoder
('auto_discretization' or one of the hard-binning schemes) by the name found
in ModelConfig. `model/__init__.py` fills the registry at import time.
"""

from typing import Dict, List, Type

from scripts.errors import ValidationError
from .base_components import BaseAttention, BaseValueEncoder

ATTENTION = 'attention'
VALUE_ENCODER = 'value_encoder'


class BackendFactory:
    """Builds attention kernels and value encoders from their config dicts."""

    _registry: Dict[str, Dict[str, type]] = {ATTENTION: {}, VALUE_ENCODER: {}}
    _defaults = {ATTENTION: 'exact', VALUE_ENCODER: 'auto_discretization'}

    @classmethod
    def register_attention(cls, name: str, attention_class: Type[BaseAttention]):
        cls._registry[ATTENTION][name.lower()] = attention_class

    @classmethod
    def register_value_encoder(cls, name: str, encoder_class: Type[BaseValueEncoder]):
        # Several binning schemes share one class; the name travels in config['backend']
        cls._registry[VALUE_ENCODER][name.lower()] = encoder_class

    @classmethod
    def _resolve(cls, kind: str, config: Dict) -> type:
        name = str(config.get('backend', cls._defaults[kind])).lower()
        registered = cls._registry[kind]
        if name not in registered:
            raise ValidationError(
                f"No {kind.replace('_', ' ')} named '{name}'. Available: {', '.join(registered)}"
            )
        return registered[name]

    @classmethod
    def create_attention(cls, dim: int, heads: int, config: Dict) -> BaseAttention:
        """
        Attention kernel for one transformer block.

        Args:
            dim: Block width
            heads: Head count (must divide dim)
            config: 'backend' plus kernel settings (n_random_features, feature_seed, ...)
        """
        return cls._resolve(ATTENTION, config)(dim, heads, config)

    @classmethod
    def create_value_encoder(cls, dim: int, config: Dict) -> BaseValueEncoder:
        """Value embedding of width dim; config carries 'backend', 'bins' and encoder options."""
        return cls._resolve(VALUE_ENCODER, config)(dim, config)

    @classmethod
    def list_available_backends(cls) -> Dict[str, List[str]]:
        return {kind: list(registered) for kind, registered in cls._registry.items()}
