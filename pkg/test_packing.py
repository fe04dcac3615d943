"""Tests for filter-and-pack, scatter back, and length bucketing."""

import numpy as np
import pytest
import torch

from expression import CellRow, SparseExpressionMatrix, Stage
from masking import MaskConfig, MaskPlan, apply_mask, build_mask_plan, mask_matrix
from packing import (
    PAD_VALUE,
    LengthBucketSampler,
    MaskedCellDataset,
    filter_and_pack,
    make_loader,
    pack_full_sequence,
    padding_fraction,
    special_token_id,
    unpack_scatter,
)
from scripts.errors import ValidationError


def _random_cells(n_cells, n_genes=60, seed=0):
    rng = np.random.default_rng(seed)
    dense = rng.uniform(0.1, 5.0, size=(n_cells, n_genes))
    dense[rng.random((n_cells, n_genes)) < 0.8] = 0.0
    dense[:, 0] = 1.0  # at least one non-zero everywhere
    dense[:, 1] = 2.0
    matrix = SparseExpressionMatrix.from_dense(dense, Stage.NORMALIZED)
    return mask_matrix(matrix, MaskConfig(nonzero_mask_ratio=0.3, zero_mask_ratio=0.05, seed=seed))


class TestFilterAndPack:

    def test_worked_example_layout(self, example_cells):
        batch = filter_and_pack(example_cells)
        pad = special_token_id(10, 'PAD')

        assert batch.seq_len == 6
        assert batch.gene_indices[0].tolist() == [1, 3, 5, 6, 8, 9]
        assert batch.gene_indices[1].tolist() == [0, 3, 4, 8, pad, pad]
        assert batch.pad_mask[1].tolist() == [False] * 4 + [True] * 2
        np.testing.assert_allclose(batch.values[0].numpy(), [2.1, 4.5, 7.3, 8.9, 3.4, 2.5], rtol=1e-6)
        np.testing.assert_allclose(batch.values[1].numpy(), [1.1, 3.4, 2.3, 2.9, PAD_VALUE, PAD_VALUE], rtol=1e-6)

    def test_single_cell_has_no_padding(self, example_cells):
        batch = filter_and_pack(example_cells[:1])
        assert batch.seq_len == 6
        assert not batch.pad_mask.any()

    def test_equal_counts_have_no_padding(self):
        cells = [apply_mask(CellRow.from_dense(v), MaskPlan.empty(CellRow.from_dense(v)))
                 for v in ([1.0, 0.0, 2.0], [0.0, 3.0, 4.0])]
        assert not filter_and_pack(cells).pad_mask.any()

    def test_cell_without_survivors_named(self):
        row = CellRow.from_dense([1.0, 0.0, 0.0], cell_index=42)
        cell = apply_mask(row, MaskPlan.from_positions(row, [0]))
        with pytest.raises(ValidationError, match="Cell 42"):
            filter_and_pack([cell])

    def test_empty_batch(self):
        with pytest.raises(ValidationError):
            filter_and_pack([])

    def test_seq_len_is_max_survivor_count(self):
        cells = _random_cells(16)
        batch = filter_and_pack(cells)
        assert batch.seq_len == max(c.survivors.size for c in cells)
        assert batch.survivor_counts == [c.survivors.size for c in cells]


class TestUnpackScatter:

    def test_worked_example_second_cell(self, example_cells):
        batch = filter_and_pack(example_cells)
        scattered = unpack_scatter(batch, torch.randn(2, batch.seq_len, 4))
        assert torch.nonzero(scattered.survivor_flags[1]).flatten().tolist() == [0, 3, 4, 8]
        assert torch.nonzero(scattered.masked_flags[1]).flatten().tolist() == [1, 2, 5, 6]
        assert torch.nonzero(scattered.zero_flags[1]).flatten().tolist() == [7, 9]

    def test_round_trip_for_many_cells(self):
        cells = _random_cells(1000, seed=1)
        for start in range(0, len(cells), 100):
            chunk = cells[start:start + 100]
            batch = filter_and_pack(chunk)
            # Encoder output = gene index, so the scatter target is checkable
            encoder_out = batch.gene_indices.to(torch.float32).unsqueeze(-1)
            scattered = unpack_scatter(batch, encoder_out)
            for b, cell in enumerate(chunk):
                survivors = torch.nonzero(scattered.survivor_flags[b]).flatten().numpy()
                np.testing.assert_array_equal(survivors, cell.survivors)
                np.testing.assert_array_equal(scattered.full[b, survivors, 0].numpy(), survivors)
                total = (scattered.survivor_flags[b].sum() + scattered.masked_flags[b].sum()
                         + scattered.zero_flags[b].sum())
                assert int(total) == cell.n_genes

    def test_zero_flags_equal_zero_set_without_masked_zeros(self):
        row = CellRow.from_dense([1.0, 0.0, 2.0, 0.0, 3.0])
        cell = apply_mask(row, MaskPlan.from_positions(row, [2]))
        scattered = unpack_scatter(filter_and_pack([cell]), torch.zeros(1, 2, 3))
        assert torch.nonzero(scattered.zero_flags[0]).flatten().tolist() == row.zero_positions().tolist()

    def test_shape_mismatch(self, example_cells):
        batch = filter_and_pack(example_cells)
        with pytest.raises(ValidationError):
            unpack_scatter(batch, torch.zeros(2, batch.seq_len + 1, 4))

    def test_gradient_flows_to_survivors_only(self, example_cells):
        batch = filter_and_pack(example_cells)
        encoder_out = torch.randn(2, batch.seq_len, 3, requires_grad=True)
        unpack_scatter(batch, encoder_out).full.sum().backward()
        np.testing.assert_array_equal(encoder_out.grad[:, :, 0].numpy() == 1.0, ~batch.pad_mask.numpy())


class TestFullSequence:

    def test_every_gene_is_a_slot(self, example_cells):
        batch = pack_full_sequence(example_cells)
        assert batch.seq_len == 10
        assert batch.full_sequence
        assert batch.mask_token[0].nonzero().flatten().tolist() == [0, 4, 7]
        assert not batch.pad_mask.any()


class TestLengthBucketing:

    def test_batches_cover_every_index_once(self):
        lengths = list(np.random.default_rng(0).integers(1, 50, size=103))
        sampler = LengthBucketSampler(lengths, batch_size=8, seed=1)
        flat = sorted(i for batch in sampler for i in batch)
        assert flat == list(range(103))
        assert len(sampler) == 13

    def test_bucketing_reduces_padding(self):
        lengths = list(np.random.default_rng(0).integers(1, 200, size=512))
        bucketed = list(LengthBucketSampler(lengths, batch_size=16, seed=0))
        naive = [list(range(i, i + 16)) for i in range(0, 512, 16)]
        assert padding_fraction(bucketed, lengths) < padding_fraction(naive, lengths)

    def test_epoch_reshuffles(self):
        sampler = LengthBucketSampler(list(range(64)), batch_size=4, seed=0)
        first = list(sampler)
        sampler.set_epoch(1)
        assert list(sampler) != first

    def test_dataset_lengths_match_survivors(self, synthetic_data):
        matrix, _ = synthetic_data
        dataset = MaskedCellDataset(matrix, MaskConfig(seed=0))
        for i in range(10):
            assert dataset.lengths[i] == dataset[i].survivors.size

    def test_frozen_dataset_ignores_epoch(self, synthetic_data):
        matrix, _ = synthetic_data
        dataset = MaskedCellDataset(matrix, MaskConfig(seed=0), frozen=True)
        before = dataset[0].masked_positions
        dataset.set_epoch(5)
        np.testing.assert_array_equal(dataset[0].masked_positions, before)

    def test_loader_yields_packed_batches(self, synthetic_data):
        matrix, _ = synthetic_data
        loader = make_loader(MaskedCellDataset(matrix, MaskConfig(seed=0)), batch_size=16, seed=0)
        batches = list(loader)
        assert sum(b.batch_size for b in batches) == matrix.n_cells
        assert all(b.n_genes == matrix.n_genes for b in batches)

    def test_mask_plan_counts_survive_packing(self):
        row = CellRow.from_dense(np.r_[np.ones(10), np.zeros(30)])
        cell = apply_mask(row, build_mask_plan(row, MaskConfig(nonzero_mask_ratio=0.3)))
        assert filter_and_pack([cell]).seq_len == 7
