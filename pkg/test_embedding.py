"""Tests for auto-discretization, hard binning and token embeddings."""

import math

import numpy as np
import pytest
import torch

from masking import MaskPlan, apply_mask
from expression import CellRow
from model import (
    AutoDiscretizer,
    BackendFactory,
    BinnedValueEncoder,
    BinningScheme,
    BinningStats,
    GeneEmbeddingTable,
    baseline_bin,
    bin_values,
    discretize,
    embed_tokens,
)
from packing import filter_and_pack, special_token_id
from scripts.errors import ValidationError
from training.autodiff import gradient_check


@pytest.fixture
def disc():
    torch.manual_seed(0)
    return AutoDiscretizer(dim=8, config={'bins': 100}).double()


class TestAutoDiscretizer:

    def test_weights_are_probabilities_on_grid(self, disc):
        grid = torch.linspace(0.0, 10.0, 10000, dtype=torch.float64)
        with torch.no_grad():
            weights = disc.bin_weights(grid)
        assert weights.shape == (10000, 100)
        assert torch.all(weights >= 0)
        np.testing.assert_allclose(weights.sum(dim=1).numpy(), 1.0, atol=1e-6)

    def test_zero_gives_uniform_weights(self, disc):
        _, weights = discretize(0.0, disc)
        np.testing.assert_allclose(weights, np.full(100, 0.01), atol=1e-12)

    def test_continuity(self, disc):
        grid = torch.linspace(0.0, 10.0, 10000, dtype=torch.float64)
        with torch.no_grad():
            gap = (disc.bin_weights(grid + 1e-4) - disc.bin_weights(grid)).abs().sum(dim=1)
        assert float(gap.max()) < 1e-2

    def test_embedding_is_table_times_weights(self, disc):
        embedding, weights = discretize(3.7, disc)
        expected = disc.table.detach().numpy() @ weights
        np.testing.assert_allclose(embedding, expected, rtol=1e-10)
        assert embedding.shape == (8,)

    @pytest.mark.parametrize('value', [float('nan'), float('inf'), -1.0])
    def test_invalid_values(self, disc, value):
        with pytest.raises(ValidationError):
            discretize(value, disc)

    def test_needs_two_bins(self):
        with pytest.raises(ValidationError):
            AutoDiscretizer(dim=4, config={'bins': 1})

    def test_bias_flag_adds_parameters(self):
        plain = AutoDiscretizer(dim=4, config={'bins': 10})
        biased = AutoDiscretizer(dim=4, config={'bins': 10, 'bias': True})
        assert sum(p.numel() for p in biased.parameters()) == sum(p.numel() for p in plain.parameters()) + 20

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(1)
        small = AutoDiscretizer(dim=4, config={'bins': 6}).double()
        values = torch.tensor([0.0, 0.4, 1.3, 2.2, 5.0], dtype=torch.float64)
        target = torch.randn(5, 4, dtype=torch.float64)

        def loss_fn():
            embedding, _ = small(values)
            return ((embedding - target) ** 2).sum()

        errors = gradient_check(loss_fn, dict(small.named_parameters()), h=1e-4)
        assert set(errors) == {'w1', 'w2', 'alpha', 'table'}
        assert max(errors.values()) < 1e-4


class TestBaselineBinning:

    def test_round_zero(self):
        assert [baseline_bin(v, 'round_zero') for v in (1.99, 2.01, 1.01, 0.0)] == [2, 2, 1, 0]

    def test_round_floor_merges_neighbours(self):
        assert baseline_bin(1.99, 'round_floor') == baseline_bin(1.01, 'round_floor') == 1

    def test_up_no_zero(self):
        assert baseline_bin(0.0, 'up_no_zero') == 0
        assert baseline_bin(0.01, 'up_no_zero') == 1
        assert baseline_bin(2.0, 'up_no_zero') == 2

    def test_equal_frequency(self):
        stats = BinningStats(10).fit(np.arange(1, 101))
        assert baseline_bin(5, 'equal_freq', stats) == 0
        assert baseline_bin(95, 'equal_freq', stats) == 9

    def test_equal_frequency_needs_stats(self):
        with pytest.raises(ValidationError):
            baseline_bin(5, 'equal_freq')
        with pytest.raises(ValidationError):
            baseline_bin(5, 'equal_freq', BinningStats(10))

    def test_vectorized_matches_scalar(self):
        values = np.array([0.0, 0.2, 0.5, 1.01, 1.99, 3.5, 7.25])
        stats = BinningStats(4).fit(values)
        for scheme in BinningScheme:
            vector = bin_values(torch.as_tensor(values), scheme, stats).tolist()
            assert vector == [baseline_bin(float(v), scheme, stats) for v in values]

    def test_binned_encoder_persists_edges(self):
        encoder = BinnedValueEncoder(dim=4, config={'backend': 'equal_freq', 'bins': 5})
        assert not encoder.stats.fitted
        encoder.fit(np.linspace(0.1, 9.0, 200))
        restored = BinnedValueEncoder(dim=4, config={'backend': 'equal_freq', 'bins': 5})
        restored.load_state_dict(encoder.state_dict())
        np.testing.assert_allclose(restored.stats.edges, encoder.stats.edges)

    def test_binned_encoder_clamps_large_values(self):
        encoder = BinnedValueEncoder(dim=4, config={'backend': 'round_zero', 'bins': 5})
        embeddings, weights = encoder(torch.tensor([0.0, 2.0, 40.0]))
        assert weights is None
        torch.testing.assert_close(embeddings[2], encoder.table.weight[4])


class TestBackendFactory:

    def test_lists_registered_backends(self):
        backends = BackendFactory.list_available_backends()
        assert {'exact', 'linear_random_features'} <= set(backends['attention'])
        assert {'auto_discretization', 'round_zero', 'up_no_zero', 'equal_freq'} <= set(backends['value_encoder'])

    def test_unknown_backend_lists_alternatives(self):
        with pytest.raises(ValueError, match="Available"):
            BackendFactory.create_value_encoder(4, {'backend': 'kmeans_bins'})

    def test_creates_hard_binning_encoder(self):
        encoder = BackendFactory.create_value_encoder(4, {'backend': 'up_no_zero', 'bins': 8})
        assert isinstance(encoder, BinnedValueEncoder)
        assert encoder.get_backend_info()['scheme'] == 'up_no_zero'


class TestGeneEmbeddingTable:

    def test_rows_cover_genes_and_specials(self):
        genes = GeneEmbeddingTable(n_genes=10, dim=4)
        assert genes.n_rows == 13
        torch.testing.assert_close(genes.special('ZERO'), genes.table.weight[special_token_id(10, 'ZERO')])

    def test_unknown_index(self):
        with pytest.raises(ValidationError):
            GeneEmbeddingTable(n_genes=10, dim=4)(torch.tensor([13]))


def _single_cell_batch(values):
    row = CellRow.from_dense(values)
    return filter_and_pack([apply_mask(row, MaskPlan.empty(row))])


class TestEmbedTokens:

    def test_zero_gene_row_leaves_value_embedding(self, disc):
        genes = GeneEmbeddingTable(n_genes=3, dim=8).double()
        batch = _single_cell_batch([0.0, 2.5, 0.0]).to(torch.float64)
        with torch.no_grad():
            genes.table.weight[1].zero_()
            tokens = embed_tokens(batch, disc, genes)
        expected, _ = discretize(2.5, disc)
        np.testing.assert_allclose(tokens[0, 0].numpy(), expected, rtol=1e-10)

    def test_same_value_different_genes(self, disc):
        genes = GeneEmbeddingTable(n_genes=3, dim=8).double()
        batch = _single_cell_batch([1.5, 1.5, 0.0]).to(torch.float64)
        with torch.no_grad():
            tokens = embed_tokens(batch, disc, genes)
            values, _ = disc(batch.values)
        torch.testing.assert_close(values[0, 0], values[0, 1])
        assert not torch.allclose(tokens[0, 0], tokens[0, 1])

    def test_permutation_equivariance(self, disc):
        genes = GeneEmbeddingTable(n_genes=6, dim=8).double()
        batch = _single_cell_batch([0.5, 1.0, 0.0, 3.0, 2.0, 0.0]).to(torch.float64)
        with torch.no_grad():
            tokens = embed_tokens(batch, disc, genes)
            perm = torch.tensor([2, 0, 3, 1])
            batch.values = batch.values[:, perm]
            batch.gene_indices = batch.gene_indices[:, perm]
            permuted = embed_tokens(batch, disc, genes)
        torch.testing.assert_close(permuted, tokens[:, perm])

    def test_pad_slots_zeroed_and_mask_slots_use_mask_row(self, example_cells):
        torch.manual_seed(0)
        value_encoder = AutoDiscretizer(dim=4, config={'bins': 8})
        genes = GeneEmbeddingTable(n_genes=10, dim=4)
        batch = filter_and_pack(example_cells)
        batch.mask_token[0, 2] = True
        with torch.no_grad():
            tokens = embed_tokens(batch, value_encoder, genes)
        assert torch.all(tokens[1, 4:] == 0)
        expected = genes.special('MASK') + genes.table.weight[int(batch.gene_indices[0, 2])]
        torch.testing.assert_close(tokens[0, 2], expected)

    def test_rejects_special_ids_in_real_slots(self, disc, example_cells):
        genes = GeneEmbeddingTable(n_genes=10, dim=8).double()
        batch = filter_and_pack(example_cells).to(torch.float64)
        batch.gene_indices[0, 0] = special_token_id(10, 'MASK')
        with pytest.raises(ValidationError):
            embed_tokens(batch, disc, genes)

    def test_unit_scale(self, disc):
        # softmax over b bins never exceeds 1, so |e| <= max column norm of T
        embedding, _ = discretize(4.2, disc)
        bound = float(disc.table.detach().norm(dim=0).max())
        assert np.linalg.norm(embedding) <= bound + 1e-9
        assert math.isfinite(float(np.linalg.norm(embedding)))
