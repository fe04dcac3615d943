"""
Masked-expression models.

AsymmetricEncoderDecoder runs a full-attention encoder over the packed
survivors only, scatters its outputs back to gene positions, fills in
MASK / ZERO / replacement tokens, projects to the decoder width and runs a
light decoder over the whole gene sequence. EncoderOnlyModel is the
full-length baseline used for comparisons.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
import torch
import torch.nn as nn

from packing.packer import PackedBatch, unpack_scatter
from scripts.errors import ValidationError
from scripts.seeding import derive_seed
from .backend_factory import BackendFactory
from .config import ModelConfig, feature_seed
from .embedding import EMBEDDING_INIT_STD, GeneEmbeddingTable, embed_tokens
from .transformer import TransformerStack

logger = logging.getLogger(__name__)

def init_weights(module: nn.Module):
    """Xavier-uniform linear weights with zero biases, N(0, 0.02) embedding rows."""
    if isinstance(module, nn.Linear):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Embedding):
        nn.init.normal_(module.weight, std=EMBEDDING_INIT_STD)


def seeded_component(seed: int, label: str, build: Callable[[], nn.Module]) -> nn.Module:
    """
    Builds and initializes one component from its own labelled stream.

    Components do not share a random stream, so swapping one (value encoder,
    head) leaves the initial weights of all the others unchanged.
    """
    torch.manual_seed(derive_seed(seed, f"init/{label}"))
    module = build()
    module.apply(init_weights)
    return module


def cell_embedding(hidden: torch.Tensor, pad_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Coordinatewise max over the non-PAD positions of each cell.

    Args:
        hidden: [batch, length, dim]
        pad_mask: [batch, length], True at excluded slots

    Returns:
        [batch, dim]
    """
    if pad_mask is None:
        pad_mask = torch.zeros(hidden.shape[:2], dtype=torch.bool, device=hidden.device)
    if hidden.shape[1] == 0 or bool(pad_mask.all(dim=1).any()):
        raise ValidationError("Cannot pool a cell with no non-PAD positions")
    return hidden.masked_fill(pad_mask.unsqueeze(-1), float('-inf')).amax(dim=1)


@dataclass
class ModelOutput:
    predictions: torch.Tensor           # [batch, n_genes] predicted values
    logits: Optional[torch.Tensor]      # [batch, n_genes, n_classes] for the classification objective
    encoder_hidden: torch.Tensor
    encoder_pad_mask: torch.Tensor
    decoder_hidden: Optional[torch.Tensor] = None


class MaskedExpressionModel(nn.Module):
    """Shared parts: value encoder, gene table, output head and pooling."""

    def __init__(self, config: ModelConfig, embed_dim: int, head_dim: int):
        super().__init__()
        self.config = config
        self.value_encoder = self.component(
            'value_encoder', lambda: BackendFactory.create_value_encoder(embed_dim, config.value_encoder_config()))
        self.genes = self.component('genes', lambda: GeneEmbeddingTable(config.n_genes, embed_dim))
        classification = config.objective == 'classification'
        self.head = self.component(
            'head', lambda: nn.Linear(head_dim, config.head_outputs, bias=classification))

    def component(self, label: str, build: Callable[[], nn.Module]) -> nn.Module:
        return seeded_component(self.config.seed, label, build)

    def fit_value_encoder(self, values: np.ndarray):
        """Fits data-dependent value encoders (equal-frequency bins); no-op otherwise."""
        if hasattr(self.value_encoder, 'fit'):
            self.value_encoder.fit(values)
            logger.info(f"Fitted {self.config.value_encoder} bins on {len(values)} values")

    def predict_values(self, hidden: torch.Tensor):
        """
        Shared linear head over every position.

        Returns:
            (predictions [batch, n_genes], logits or None)
        """
        out = self.head(hidden)
        if self.config.objective == 'classification':
            return out.argmax(dim=-1).to(hidden.dtype), out
        return out.squeeze(-1), None

    def count_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def get_model_info(self) -> Dict:
        return {
            'architecture': self.config.architecture,
            'preset': self.config.preset,
            'parameters': self.count_parameters(),
            'value_encoder': self.value_encoder.get_backend_info(),
        }


class AsymmetricEncoderDecoder(MaskedExpressionModel):
    def __init__(self, config: ModelConfig):
        with torch.random.fork_rng(devices=[]):
            super().__init__(config, config.encoder.dim, config.decoder.dim)
            self.encoder = self.component('encoder', lambda: TransformerStack(
                config.encoder.depth, config.encoder.dim, config.encoder.heads,
                config.attention_config(config.encoder_backend, 'encoder'),
                config.ffn_multiplier, stage='encoder',
            ))
            self.projection = self.component('projection', lambda: nn.Linear(config.encoder.dim, config.decoder.dim))
            self.decoder = self.component('decoder', lambda: TransformerStack(
                config.decoder.depth, config.decoder.dim, config.decoder.heads,
                config.attention_config(config.attention_backend, 'decoder'),
                config.ffn_multiplier, stage='decoder',
            ))

    def encoder_forward(self, tokens: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        return self.encoder(tokens, pad_mask)

    def assemble_decoder_input(self, encoder_out: torch.Tensor, batch: PackedBatch) -> torch.Tensor:
        """
        Full-length decoder input, projected to the decoder width.

        Survivors carry encoder outputs. Masked positions carry the MASK
        embedding, or the embedding of their replacement value when the plan
        replaced them with a value (a kept zero uses ZERO). Unmasked zeros carry
        ZERO. Gene embeddings are added at every position.
        """
        if batch.full_sequence:
            raise ValidationError("The asymmetric model expects filter-and-pack batches")
        scattered = unpack_scatter(batch, encoder_out)
        survivors = scattered.survivor_flags
        if bool((survivors & (scattered.masked_flags | scattered.zero_flags)).any()):
            raise ValidationError("Scatter conflict: a survivor position is also masked or zero")
        if not bool((survivors | scattered.masked_flags | scattered.zero_flags).all()):
            raise ValidationError("Scatter left gene positions without a token")

        dtype = encoder_out.dtype
        observed = batch.observed.to(dtype)
        replaced = batch.is_masked & ~batch.is_mask_token
        value_tokens = replaced & (observed > 0)
        zero_tokens = scattered.zero_flags | (replaced & (observed == 0))

        tokens = scattered.full
        tokens = torch.where(batch.is_mask_token.unsqueeze(-1), self.genes.special('MASK').to(dtype), tokens)
        tokens = torch.where(zero_tokens.unsqueeze(-1), self.genes.special('ZERO').to(dtype), tokens)
        if bool(value_tokens.any()):
            embedded, _ = self.value_encoder(observed[value_tokens])
            tokens = tokens.index_put((value_tokens,), embedded.to(dtype))
        tokens = tokens + self.genes.all_genes().to(dtype)
        return self.projection(tokens)

    def decoder_forward(self, full: torch.Tensor) -> torch.Tensor:
        return self.decoder(full)

    def forward(self, batch: PackedBatch) -> ModelOutput:
        tokens = embed_tokens(batch, self.value_encoder, self.genes)
        encoded = self.encoder_forward(tokens, batch.pad_mask)
        decoded = self.decoder_forward(self.assemble_decoder_input(encoded, batch))
        predictions, logits = self.predict_values(decoded)
        return ModelOutput(predictions=predictions, logits=logits, encoder_hidden=encoded,
                           encoder_pad_mask=batch.pad_mask, decoder_hidden=decoded)

    def embed(self, batch: PackedBatch, source: str = 'encoder') -> torch.Tensor:
        """Max-pooled cell embeddings from the encoder (survivors) or the decoder (all genes)."""
        tokens = embed_tokens(batch, self.value_encoder, self.genes)
        encoded = self.encoder_forward(tokens, batch.pad_mask)
        if source == 'encoder':
            return cell_embedding(encoded, batch.pad_mask)
        if source == 'decoder':
            return cell_embedding(self.decoder_forward(self.assemble_decoder_input(encoded, batch)))
        raise ValidationError(f"Unknown embedding source '{source}'")

    def redraw_features(self, seed: int) -> int:
        """Redraws every random-feature matrix; seed=config.seed restores the initial draw."""
        return (self.encoder.redraw_features(feature_seed(seed, 'encoder'))
                + self.decoder.redraw_features(feature_seed(seed, 'decoder')))


class EncoderOnlyModel(MaskedExpressionModel):
    """Single encoder over every gene position, zeros and masked slots included."""

    def __init__(self, config: ModelConfig):
        with torch.random.fork_rng(devices=[]):
            super().__init__(config, config.encoder.dim, config.encoder.dim)
            self.encoder = self.component('encoder', lambda: TransformerStack(
                config.encoder.depth, config.encoder.dim, config.encoder.heads,
                config.attention_config(config.attention_backend, 'encoder'),
                config.ffn_multiplier, stage='encoder',
            ))

    def encoder_forward(self, tokens: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        return self.encoder(tokens, pad_mask)

    def forward(self, batch: PackedBatch) -> ModelOutput:
        if not batch.full_sequence:
            raise ValidationError("The encoder-only model expects full-sequence batches")
        tokens = embed_tokens(batch, self.value_encoder, self.genes)
        encoded = self.encoder_forward(tokens, batch.pad_mask)
        predictions, logits = self.predict_values(encoded)
        return ModelOutput(predictions=predictions, logits=logits, encoder_hidden=encoded,
                           encoder_pad_mask=batch.pad_mask)

    def embed(self, batch: PackedBatch, source: str = 'encoder') -> torch.Tensor:
        tokens = embed_tokens(batch, self.value_encoder, self.genes)
        return cell_embedding(self.encoder_forward(tokens, batch.pad_mask), batch.pad_mask)

    def redraw_features(self, seed: int) -> int:
        return self.encoder.redraw_features(feature_seed(seed, 'encoder'))


def build_model(config: ModelConfig) -> MaskedExpressionModel:
    """Creates the model selected by config.architecture."""
    if config.architecture == 'encoder_only':
        model = EncoderOnlyModel(config)
    else:
        model = AsymmetricEncoderDecoder(config)
    logger.info(f"Built {config.architecture} model with {model.count_parameters():,} parameters")
    return model
