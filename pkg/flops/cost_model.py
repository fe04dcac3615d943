"""
Analytic training-cost model.

Only matrix multiplications are counted: a [m, n] x [n, p] product costs
2*m*n*p FLOPs (multiply + add) and the backward pass is counted as twice the
forward pass. Softmax, normalization, activations and residual additions are
not matmuls and are left out.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
import yaml

from expression.matrix import REFERENCE_GENE_COUNT
from scripts.errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

VARIANTS = ('encoder_only_exact', 'encoder_only_linear', 'asymmetric')
BACKWARD_MULTIPLIER = 2
N_SPECIAL_TOKENS = 3

# Published training budget: 5 million samples over 5 epochs
TRAIN_SAMPLES = 5_000_000
TRAIN_EPOCHS = 5

# Published per-sample forward+backward FLOPs, parameter counts (M) and resource share
PUBLISHED_COSTS = {
    'transformer': {'per_sample': 9.86e12, 'total': 2.46e20, 'params_m': 11.3, 'resource_pct': 100.0},
    'performer': {'per_sample': 1.06e12, 'total': 2.65e19, 'params_m': 8.9, 'resource_pct': 10.8},
    'asymmetric': {'per_sample': 3.35e11, 'total': 8.38e18, 'params_m': 9.8, 'resource_pct': 3.4},
}

REPORT_HEADER = "Matmul-only FLOPs (2*m*n*k per product), backward counted as 2x forward."


def flops_matmul(m: int, n: int, p: int) -> int:
    return 2 * m * n * p


@dataclass
class ComponentSpec:
    """One transformer stack."""

    depth: int
    heads: int
    dim: int
    attention: str = 'exact'            # exact | linear
    n_random_features: int = 256
    ffn_multiplier: int = 4

    def validate(self, name: str):
        if self.depth < 0 or self.heads < 1 or self.dim < 1:
            raise ValidationError(f"{name}: depth must be >= 0, heads and dim positive")
        if self.dim % self.heads != 0:
            raise ValidationError(f"{name}: dim {self.dim} not divisible by heads {self.heads}")
        if self.attention not in ('exact', 'linear'):
            raise ValidationError(f"{name}: attention must be 'exact' or 'linear', got {self.attention}")


@dataclass
class ArchitectureSpec:
    name: str
    variant: str
    encoder: ComponentSpec
    decoder: Optional[ComponentSpec] = None
    seq_len_full: int = REFERENCE_GENE_COUNT
    seq_len_encoder: Optional[int] = None
    n_genes: Optional[int] = None        # embedding vocabulary, defaults to seq_len_full
    bins: int = 100
    n_special: int = N_SPECIAL_TOKENS
    params_declared: Optional[float] = None

    def __post_init__(self):
        if self.n_genes is None:
            self.n_genes = self.seq_len_full
        self.validate()

    @classmethod
    def from_dict(cls, config: Dict) -> 'ArchitectureSpec':
        config = dict(config)
        for key in ('name', 'variant', 'encoder'):
            if key not in config:
                raise ConfigError(key)
        config['encoder'] = ComponentSpec(**config['encoder'])
        if config.get('decoder') is not None:
            config['decoder'] = ComponentSpec(**config['decoder'])
        return cls(**config)

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant}")
        if self.seq_len_full < 1 or self.n_genes < 0 or self.bins < 0 or self.n_special < 0:
            raise ValidationError("sequence lengths must be positive and vocabulary sizes non-negative")
        self.encoder.validate(f"{self.name}.encoder")
        if self.variant == 'asymmetric':
            if self.decoder is None or self.seq_len_encoder is None:
                raise ValidationError(f"{self.name}: asymmetric variant needs a decoder and seq_len_encoder")
            self.decoder.validate(f"{self.name}.decoder")
            if not 1 <= self.seq_len_encoder <= self.seq_len_full:
                raise ValidationError(f"{self.name}: seq_len_encoder must be in [1, seq_len_full]")
        else:
            expected = 'linear' if self.variant == 'encoder_only_linear' else 'exact'
            if self.encoder.attention != expected:
                raise ValidationError(f"{self.name}: variant {self.variant} needs {expected} attention")

    def to_dict(self) -> Dict:
        return asdict(self)


def attention_flops(length: int, comp: ComponentSpec) -> int:
    """Score and value matmuls of one layer (projections excluded)."""
    d = comp.dim
    if comp.attention == 'exact':
        # Q K^T and A V
        return flops_matmul(length, d, length) + flops_matmul(length, length, d)
    r, head_dim = comp.n_random_features, d // comp.heads
    per_head = (
        2 * flops_matmul(length, head_dim, r)      # feature maps of Q and K
        + flops_matmul(r, length, head_dim)        # K'^T V
        + flops_matmul(length, r, head_dim)        # Q' (K'^T V)
        + flops_matmul(length, r, 1)               # normalizer Q' (K'^T 1)
    )
    return comp.heads * per_head


def projection_flops(length: int, comp: ComponentSpec) -> int:
    return 4 * flops_matmul(length, comp.dim, comp.dim)


def ffn_flops(length: int, comp: ComponentSpec) -> int:
    hidden = comp.ffn_multiplier * comp.dim
    return flops_matmul(length, comp.dim, hidden) + flops_matmul(length, hidden, comp.dim)


def stack_breakdown(length: int, comp: ComponentSpec, prefix: str) -> Dict[str, int]:
    return {
        f'{prefix}_projections': comp.depth * projection_flops(length, comp),
        f'{prefix}_attention': comp.depth * attention_flops(length, comp),
        f'{prefix}_ffn': comp.depth * ffn_flops(length, comp),
    }


def value_embedding_flops(length: int, dim: int, bins: int) -> int:
    """Auto-discretization per token: v*w1, w2 @ v2 and T @ v4."""
    return length * (flops_matmul(1, 1, bins) + flops_matmul(1, bins, bins) + flops_matmul(1, bins, dim))


def forward_breakdown(spec: ArchitectureSpec) -> Dict[str, int]:
    """Per-sample forward FLOPs by term."""
    enc = spec.encoder
    if spec.variant == 'asymmetric':
        enc_len = spec.seq_len_encoder
        terms = {'value_embedding': value_embedding_flops(enc_len, enc.dim, spec.bins)}
        terms.update(stack_breakdown(enc_len, enc, 'encoder'))
        terms['projection'] = flops_matmul(spec.seq_len_full, enc.dim, spec.decoder.dim)
        terms.update(stack_breakdown(spec.seq_len_full, spec.decoder, 'decoder'))
        terms['head'] = flops_matmul(spec.seq_len_full, spec.decoder.dim, 1)
    else:
        terms = {'value_embedding': value_embedding_flops(spec.seq_len_full, enc.dim, spec.bins)}
        terms.update(stack_breakdown(spec.seq_len_full, enc, 'encoder'))
        terms['head'] = flops_matmul(spec.seq_len_full, enc.dim, 1)
    return terms


def estimate_flops(spec: ArchitectureSpec) -> int:
    """Forward + backward matmul FLOPs for one sample."""
    forward = sum(forward_breakdown(spec).values())
    return forward * (1 + BACKWARD_MULTIPLIER)


def layer_parameters(comp: ComponentSpec) -> int:
    """One pre-LN block: attention projections, FFN and two LayerNorms."""
    d, hidden = comp.dim, comp.ffn_multiplier * comp.dim
    attention = 4 * (d * d + d)
    ffn = d * hidden + hidden + hidden * d + d
    norms = 2 * 2 * d
    return attention + ffn + norms


def stack_parameters(comp: ComponentSpec) -> int:
    final_norm = 2 * comp.dim if comp.depth > 0 else 0
    return comp.depth * layer_parameters(comp) + final_norm


def count_parameters(spec: ArchitectureSpec) -> int:
    """Weight tensor sizes summed per the model's module shapes (regression head)."""
    d = spec.encoder.dim
    gene_table = (spec.n_genes + spec.n_special) * d
    discretizer = d * spec.bins + spec.bins + spec.bins * spec.bins + 1 if spec.bins > 0 else 0
    total = gene_table + discretizer + stack_parameters(spec.encoder)
    if spec.variant == 'asymmetric':
        total += d * spec.decoder.dim + spec.decoder.dim
        total += stack_parameters(spec.decoder)
        total += spec.decoder.dim
    else:
        total += d
    return total


@dataclass
class CostReport:
    name: str
    variant: str
    per_sample_forward_backward: int
    total_train: float
    resource_pct: float
    parameter_count: int
    breakdown: Dict[str, int] = field(default_factory=dict)

    def row(self) -> Dict:
        return {
            'name': self.name,
            'variant': self.variant,
            'parameters_m': self.parameter_count / 1e6,
            'flops_per_sample': float(self.per_sample_forward_backward),
            'total_train_flops': self.total_train,
            'resource_pct': self.resource_pct,
        }


def total_train_flops(per_sample: float, n_samples: int = TRAIN_SAMPLES, n_epochs: int = TRAIN_EPOCHS) -> float:
    return per_sample * n_samples * n_epochs


def efficiency_report(specs: Sequence[ArchitectureSpec], reference: Optional[str] = None,
                      n_samples: int = TRAIN_SAMPLES, n_epochs: int = TRAIN_EPOCHS) -> List[CostReport]:
    """
    Cost of each spec relative to the reference spec.

    Args:
        specs: Architectures to compare
        reference: Name of the reference spec (default: the first one)

    Returns:
        One CostReport per spec, in input order
    """
    if not specs:
        raise ValidationError("No architecture specs given")
    reference = reference or specs[0].name
    by_name = {s.name: s for s in specs}
    if reference not in by_name:
        raise ValidationError(f"Reference spec '{reference}' not found. Available: {', '.join(by_name)}")

    reference_total = total_train_flops(estimate_flops(by_name[reference]), n_samples, n_epochs)
    reports = []
    for spec in specs:
        per_sample = estimate_flops(spec)
        total = total_train_flops(per_sample, n_samples, n_epochs)
        reports.append(CostReport(
            name=spec.name,
            variant=spec.variant,
            per_sample_forward_backward=per_sample,
            total_train=total,
            resource_pct=100.0 * total / reference_total,
            parameter_count=count_parameters(spec),
            breakdown=forward_breakdown(spec),
        ))
    return reports


def report_frame(reports: Sequence[CostReport]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in reports])


def format_report(reports: Sequence[CostReport]) -> str:
    """Aligned text table in the layout of the published comparison."""
    lines = [
        REPORT_HEADER,
        "",
        f"{'Model':<14} {'Params (M)':>10} {'Fwd+bwd (FLOPs/sample)':>24} {'Total train (FLOPs)':>20} {'Resource':>9}",
        "-" * 81,
    ]
    for r in reports:
        lines.append(
            f"{r.name:<14} {r.parameter_count / 1e6:>10.1f} {r.per_sample_forward_backward:>24.2E} "
            f"{r.total_train:>20.2E} {r.resource_pct:>8.1f}%"
        )
    return "\n".join(lines)


def load_specs(path: Union[str, Path]) -> List[ArchitectureSpec]:
    """Reads a YAML list of architecture specs (top-level key `architectures`)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Spec file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        content = yaml.safe_load(f) or {}
    entries = content.get('architectures')
    if not entries:
        raise ConfigError('architectures', f"{path} has no 'architectures' list")
    return [ArchitectureSpec.from_dict(entry) for entry in entries]


def check_declared_parameters(spec: ArchitectureSpec, tolerance: float = 0.2) -> bool:
    """True when the analytic count is within tolerance of params_declared (or none is declared)."""
    if spec.params_declared is None:
        return True
    count = count_parameters(spec)
    ok = math.isclose(count, spec.params_declared, rel_tol=tolerance)
    if not ok:
        logger.warning(f"{spec.name}: {count:,} parameters vs {spec.params_declared:,.0f} declared")
    return ok


def spec_from_model_config(config, seq_len_encoder: Optional[int] = None,
                           name: Optional[str] = None) -> ArchitectureSpec:
    """
    Architecture spec of a model built from a ModelConfig (auto-discretization,
    regression head), so analytic counts can be checked against real modules.
    """
    def component(stack, backend: str) -> ComponentSpec:
        attention = 'linear' if backend == 'linear_random_features' else 'exact'
        return ComponentSpec(depth=stack.depth, heads=stack.heads, dim=stack.dim, attention=attention,
                             n_random_features=config.n_random_features,
                             ffn_multiplier=config.ffn_multiplier)

    name = name or config.preset or config.architecture
    if config.architecture == 'encoder_only':
        encoder = component(config.encoder, config.attention_backend)
        variant = 'encoder_only_linear' if encoder.attention == 'linear' else 'encoder_only_exact'
        return ArchitectureSpec(name=name, variant=variant, encoder=encoder,
                                seq_len_full=config.n_genes, bins=config.bins)
    return ArchitectureSpec(
        name=name,
        variant='asymmetric',
        encoder=component(config.encoder, config.encoder_backend),
        decoder=component(config.decoder, config.attention_backend),
        seq_len_full=config.n_genes,
        seq_len_encoder=seq_len_encoder or config.n_genes,
        bins=config.bins,
    )
