"""Tests for the analytic FLOPs and parameter model."""

from dataclasses import replace
from pathlib import Path

import pytest

from flops import (
    PUBLISHED_COSTS,
    ArchitectureSpec,
    ComponentSpec,
    check_declared_parameters,
    count_parameters,
    efficiency_report,
    estimate_flops,
    format_report,
    forward_breakdown,
    load_specs,
    report_frame,
    spec_from_model_config,
    total_train_flops,
)
from flops.cost_model import layer_parameters
from model import ModelConfig, StackConfig, build_model
from scripts.errors import ConfigError, ValidationError

SPECS_PATH = Path(__file__).parent / 'flops_specs.yaml'


@pytest.fixture(scope='module')
def calibrated():
    return {spec.name: spec for spec in load_specs(SPECS_PATH)}


def _encoder_only(length, attention='exact', depth=2, dim=64):
    variant = 'encoder_only_linear' if attention == 'linear' else 'encoder_only_exact'
    return ArchitectureSpec(name=f'{attention}-{length}', variant=variant, seq_len_full=length,
                            encoder=ComponentSpec(depth=depth, heads=4, dim=dim, attention=attention))


class TestPublishedTotals:

    @pytest.mark.parametrize('name, expected', [
        ('transformer', 2.465e20),
        ('performer', 2.65e19),
        ('asymmetric', 8.375e18),
    ])
    def test_total_is_per_sample_times_budget(self, name, expected):
        total = total_train_flops(PUBLISHED_COSTS[name]['per_sample'])
        assert total == pytest.approx(expected, rel=1e-12)
        # Published totals are given to three significant figures
        assert total == pytest.approx(PUBLISHED_COSTS[name]['total'], rel=5e-3)

    def test_budget_is_25_million_samples(self):
        assert total_train_flops(1.0) == 2.5e7


class TestEstimateFlops:

    def test_calibrated_ordering_and_ratios(self, calibrated):
        transformer = estimate_flops(calibrated['transformer'])
        performer = estimate_flops(calibrated['performer'])
        asymmetric = estimate_flops(calibrated['asymmetric'])
        assert asymmetric < performer < transformer
        assert asymmetric / transformer <= 0.05
        assert 0.05 <= performer / transformer <= 0.20

    def test_backward_is_twice_forward(self, calibrated):
        spec = calibrated['performer']
        assert estimate_flops(spec) == 3 * sum(forward_breakdown(spec).values())

    def test_depth_zero_leaves_embedding_and_head(self):
        spec = _encoder_only(100, depth=0)
        terms = forward_breakdown(spec)
        assert terms['encoder_attention'] == terms['encoder_ffn'] == terms['encoder_projections'] == 0
        assert terms['value_embedding'] > 0 and terms['head'] > 0

    def test_halving_encoder_length_quarters_attention(self, calibrated):
        spec = calibrated['asymmetric']
        half = replace(spec, seq_len_encoder=spec.seq_len_encoder // 2)
        assert forward_breakdown(spec)['encoder_attention'] == 4 * forward_breakdown(half)['encoder_attention']

    def test_exact_attention_is_asymptotically_quadratic(self):
        ratios = [estimate_flops(_encoder_only(2 * n)) / estimate_flops(_encoder_only(n))
                  for n in (1_000, 10_000, 100_000)]
        assert ratios[0] < ratios[1] < ratios[2] < 4.0
        assert ratios[2] > 3.9

    def test_linear_attention_is_linear(self):
        assert estimate_flops(_encoder_only(4000, 'linear')) == 2 * estimate_flops(_encoder_only(2000, 'linear'))

    def test_asymmetric_cheaper_than_full_exact(self):
        enc = ComponentSpec(depth=2, heads=4, dim=64)
        asymmetric = ArchitectureSpec(name='a', variant='asymmetric', seq_len_full=2000, seq_len_encoder=300,
                                      encoder=enc, decoder=ComponentSpec(depth=1, heads=4, dim=64,
                                                                         attention='linear'))
        full = ArchitectureSpec(name='t', variant='encoder_only_exact', seq_len_full=2000, encoder=enc)
        assert estimate_flops(asymmetric) < estimate_flops(full)


class TestCountParameters:

    def test_declared_counts(self, calibrated):
        assert all(check_declared_parameters(spec) for spec in calibrated.values())

    def test_10m_preset_in_range(self):
        spec = spec_from_model_config(ModelConfig.from_preset('10M'), seq_len_encoder=1400)
        assert 8e6 <= count_parameters(spec) <= 12e6

    @pytest.mark.parametrize('architecture', ['asymmetric', 'encoder_only'])
    def test_matches_built_model(self, architecture):
        config = ModelConfig(encoder=StackConfig(2, 2, 16), decoder=StackConfig(1, 2, 8), n_genes=40,
                             bins=12, architecture=architecture)
        assert count_parameters(spec_from_model_config(config)) == build_model(config).count_parameters()

    def test_empty_spec_counts_head_only(self):
        spec = ArchitectureSpec(name='empty', variant='encoder_only_exact', seq_len_full=10, n_genes=0,
                                bins=0, n_special=0, encoder=ComponentSpec(depth=0, heads=1, dim=32))
        assert count_parameters(spec) == 32

    def test_doubling_dim_quadruples_layers(self):
        small = layer_parameters(ComponentSpec(depth=1, heads=8, dim=256))
        large = layer_parameters(ComponentSpec(depth=1, heads=8, dim=512))
        assert large / small == pytest.approx(4.0, rel=0.01)


class TestEfficiencyReport:

    def test_identical_specs(self):
        a, b = _encoder_only(500), _encoder_only(500)
        b.name = 'copy'
        assert [r.resource_pct for r in efficiency_report([a, b])] == [100.0, 100.0]

    def test_reference_by_name(self, calibrated):
        reports = efficiency_report(list(calibrated.values()), reference='transformer')
        by_name = {r.name: r for r in reports}
        assert by_name['transformer'].resource_pct == 100.0
        assert by_name['asymmetric'].resource_pct <= 5.0

    def test_missing_reference(self, calibrated):
        with pytest.raises(ValidationError, match="Available"):
            efficiency_report(list(calibrated.values()), reference='bert')

    def test_no_specs(self):
        with pytest.raises(ValidationError):
            efficiency_report([])

    def test_report_outputs(self, calibrated):
        reports = efficiency_report(list(calibrated.values()))
        text = format_report(reports)
        assert text.startswith('Matmul-only FLOPs')
        assert all(name in text for name in calibrated)
        frame = report_frame(reports)
        assert list(frame['name']) == list(calibrated)
        assert frame.loc[0, 'total_train_flops'] == pytest.approx(frame.loc[0, 'flops_per_sample'] * 2.5e7)


class TestArchitectureSpec:

    def test_asymmetric_needs_decoder(self):
        with pytest.raises(ValidationError):
            ArchitectureSpec(name='x', variant='asymmetric', encoder=ComponentSpec(1, 1, 8), seq_len_encoder=10)

    def test_variant_must_match_attention(self):
        with pytest.raises(ValidationError):
            ArchitectureSpec(name='x', variant='encoder_only_linear', encoder=ComponentSpec(1, 1, 8))

    def test_encoder_length_bounded_by_full_length(self):
        with pytest.raises(ValidationError):
            ArchitectureSpec(name='x', variant='asymmetric', seq_len_full=10, seq_len_encoder=11,
                             encoder=ComponentSpec(1, 1, 8), decoder=ComponentSpec(1, 1, 8))

    def test_missing_key(self):
        with pytest.raises(ConfigError) as info:
            ArchitectureSpec.from_dict({'name': 'x', 'variant': 'encoder_only_exact'})
        assert info.value.key == 'encoder'

    def test_missing_spec_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_specs(tmp_path / 'absent.yaml')
