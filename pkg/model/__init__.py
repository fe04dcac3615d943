"""Value embeddings, attention backends and the masked-expression models."""

from .base_components import BaseAttention, BaseValueEncoder
from .backend_factory import BackendFactory
from .attention import ExactAttention, LinearRandomFeatureAttention
from .embedding import (
    AutoDiscretizer,
    BinnedValueEncoder,
    BinningScheme,
    BinningStats,
    GeneEmbeddingTable,
    baseline_bin,
    bin_values,
    discretize,
    embed_tokens,
)
from .config import PRESETS, ModelConfig, StackConfig
from .transformer import TransformerBlock, TransformerStack
from .asymmetric import (
    AsymmetricEncoderDecoder,
    EncoderOnlyModel,
    MaskedExpressionModel,
    ModelOutput,
    build_model,
    cell_embedding,
)
from .checkpoint import CHECKPOINT_MAGIC, load_checkpoint, save_checkpoint

# Register backends in the factory
BackendFactory.register_attention('exact', ExactAttention)
BackendFactory.register_attention('linear_random_features', LinearRandomFeatureAttention)
BackendFactory.register_value_encoder('auto_discretization', AutoDiscretizer)
for _scheme in BinningScheme:
    BackendFactory.register_value_encoder(_scheme.value, BinnedValueEncoder)

__all__ = [
    'BaseAttention',
    'BaseValueEncoder',
    'BackendFactory',
    'ExactAttention',
    'LinearRandomFeatureAttention',
    'AutoDiscretizer',
    'BinnedValueEncoder',
    'BinningScheme',
    'BinningStats',
    'GeneEmbeddingTable',
    'baseline_bin',
    'bin_values',
    'discretize',
    'embed_tokens',
    'PRESETS',
    'ModelConfig',
    'StackConfig',
    'TransformerBlock',
    'TransformerStack',
    'AsymmetricEncoderDecoder',
    'EncoderOnlyModel',
    'MaskedExpressionModel',
    'ModelOutput',
    'build_model',
    'cell_embedding',
    'CHECKPOINT_MAGIC',
    'load_checkpoint',
    'save_checkpoint',
]
