"""Tests for matrix ingestion, quality control, normalization and synthetic data."""

import numpy as np
import pytest

from expression import (
    CellRow,
    SparseExpressionMatrix,
    Stage,
    SyntheticSpec,
    cell_records,
    load_labels,
    load_matrix,
    normalize,
    quality_filter,
    save_labels,
    save_matrix,
    scale_to_target,
    synthesize_dataset,
)
from scripts.errors import EmptyResultError, ParseError, ValidationError


def _write(tmp_path, text, name='matrix.txt'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return path


def _raw_with_nonzeros(counts, n_genes=300):
    dense = np.zeros((len(counts), n_genes))
    for i, n in enumerate(counts):
        dense[i, :n] = 1 + (np.arange(n) % 4)
    return SparseExpressionMatrix.from_dense(dense, Stage.RAW_COUNTS)


class TestLoadMatrix:

    def test_parses_header_and_triplets(self, tmp_path):
        lines = ["2 10 11"]
        lines += [f"0 {g} {g + 1}" for g in range(6)]
        lines += [f"1 {g} 2" for g in range(0, 10, 2)]
        matrix = load_matrix(_write(tmp_path, "\n".join(lines) + "\n"))

        assert matrix.n_cells == 2
        assert matrix.n_genes == 10
        assert matrix.n_entries == 11
        assert matrix.stage == Stage.RAW_COUNTS

    def test_entries_sorted_by_cell_then_gene(self, tmp_path):
        text = "2 4 3\n1 0 5\n0 3 1\n0 1 2\n"
        matrix = load_matrix(_write(tmp_path, text))
        assert matrix.cells.tolist() == [0, 0, 1]
        assert matrix.genes.tolist() == [1, 3, 0]

    def test_duplicate_pair_rejected(self, tmp_path):
        text = "1 10 2\n0 3 4.5\n0 3 4.5\n"
        with pytest.raises(ValidationError, match="Duplicate"):
            load_matrix(_write(tmp_path, text))

    def test_malformed_line_reports_line_number(self, tmp_path):
        text = "1 10 2\n0 3 4.5\n0 four 1.0\n"
        with pytest.raises(ParseError) as info:
            load_matrix(_write(tmp_path, text))
        assert info.value.line_number == 3

    def test_out_of_range_index_rejected(self, tmp_path):
        text = "1 10 1\n0 10 1.0\n"
        with pytest.raises(ValidationError, match="out of range"):
            load_matrix(_write(tmp_path, text))

    def test_entry_count_must_match_header(self, tmp_path):
        with pytest.raises(ParseError):
            load_matrix(_write(tmp_path, "1 10 3\n0 1 1\n"))

    def test_worked_example_first_cell(self, example_matrix):
        # 0.3, 2.1, 4.5, 7.3, 8.9, 3.4, 2.5 are the non-zero entries of C1
        assert example_matrix.row(0).n_nonzero == 7
        assert example_matrix.row(1).n_nonzero == 5
        assert example_matrix.stage == Stage.NORMALIZED

    def test_save_then_load_is_identity(self, tmp_path, example_matrix):
        path = save_matrix(example_matrix, tmp_path / 'example.txt')
        loaded = load_matrix(path)
        np.testing.assert_array_equal(loaded.to_dense(), example_matrix.to_dense())
        assert loaded.stage == Stage.NORMALIZED

    def test_dense_csv_input(self, tmp_path):
        path = _write(tmp_path, "0,1,2\n3,0,0\n", name='tiny.csv')
        matrix = load_matrix(path)
        assert (matrix.n_cells, matrix.n_genes, matrix.n_entries) == (2, 3, 3)

    def test_raw_counts_must_be_integers(self):
        with pytest.raises(ValidationError):
            SparseExpressionMatrix.from_dense([[1.5, 0.0]], Stage.RAW_COUNTS)

    def test_labels_round_trip(self, tmp_path):
        path = save_labels(['a', 'b'], ['T', 'B'], tmp_path / 'labels.csv')
        assert load_labels(path) == (['a', 'b'], ['T', 'B'])


class TestQualityFilter:

    def test_drops_cells_below_threshold(self):
        matrix = _raw_with_nonzeros([250, 199, 201])
        kept = quality_filter(matrix, min_genes=200)
        assert kept.n_cells == 2
        assert kept.nonzeros_per_cell().tolist() == [250, 201]

    def test_cell_with_150_genes_removed(self):
        matrix = _raw_with_nonzeros([150, 220])
        assert quality_filter(matrix, min_genes=200).nonzeros_per_cell().tolist() == [220]

    def test_min_genes_zero_is_identity(self):
        matrix = _raw_with_nonzeros([3, 1, 8])
        np.testing.assert_array_equal(quality_filter(matrix, 0).to_dense(), matrix.to_dense())

    def test_idempotent(self):
        matrix = _raw_with_nonzeros([250, 199, 201])
        once = quality_filter(matrix, 200)
        twice = quality_filter(once, 200)
        np.testing.assert_array_equal(once.to_dense(), twice.to_dense())

    def test_all_filtered_raises(self):
        with pytest.raises(EmptyResultError):
            quality_filter(_raw_with_nonzeros([5, 6]), min_genes=200)

    def test_requires_raw_counts(self, example_matrix):
        with pytest.raises(ValidationError):
            quality_filter(example_matrix, 1)


class TestNormalize:

    def test_hand_computed_cell(self):
        matrix = SparseExpressionMatrix.from_dense([[1, 0, 3]], Stage.RAW_COUNTS)
        out = normalize(matrix, target_sum=10000)
        np.testing.assert_allclose(out.values, [np.log(2501.0), np.log(7501.0)], rtol=1e-12)
        np.testing.assert_allclose(out.values, [7.8245, 8.9229], atol=1e-4)
        assert out.stage == Stage.NORMALIZED

    def test_equal_counts_stay_equal(self):
        out = normalize(SparseExpressionMatrix.from_dense([[5, 5]], Stage.RAW_COUNTS))
        assert out.values[0] == out.values[1]

    def test_sparsity_pattern_preserved(self, synthetic_raw):
        raw, _ = synthetic_raw
        out = normalize(raw)
        np.testing.assert_array_equal(out.cells, raw.cells)
        np.testing.assert_array_equal(out.genes, raw.genes)

    def test_scaled_rows_sum_to_target(self, synthetic_raw):
        raw, _ = synthetic_raw
        sums = np.asarray(scale_to_target(raw, 10000.0).sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 10000.0, rtol=1e-9)

    def test_rejects_normalized_input(self, example_matrix):
        with pytest.raises(ValidationError):
            normalize(example_matrix)

    def test_rejects_non_positive_target(self):
        with pytest.raises(ValidationError):
            normalize(SparseExpressionMatrix.from_dense([[1, 2]], Stage.RAW_COUNTS), target_sum=0)


class TestCellRecords:

    def test_library_size_is_row_sum(self, synthetic_raw):
        raw, labels = synthetic_raw
        records = cell_records(raw, labels=labels)
        np.testing.assert_allclose([r.library_size for r in records], raw.to_dense().sum(axis=1))
        assert records[0].label == labels[0]
        assert records[0].cell_id == 'cell_0'


class TestCellRow:

    def test_dense_and_zero_positions(self):
        row = CellRow.from_dense([0.0, 2.0, 0.0, 1.0])
        np.testing.assert_array_equal(row.dense(), [0.0, 2.0, 0.0, 1.0])
        assert row.zero_positions().tolist() == [0, 2]
        assert (row.n_nonzero, row.n_zero) == (2, 2)


class TestSynthesizeDataset:

    def test_deterministic_for_seed(self):
        spec = SyntheticSpec(n_cells=50, n_genes=100, seed=7)
        a, labels_a = synthesize_dataset(spec)
        b, labels_b = synthesize_dataset(spec)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.genes, b.genes)
        assert labels_a == labels_b

    def test_requested_sparsity(self):
        matrix, _ = synthesize_dataset(SyntheticSpec(n_cells=200, n_genes=1000, sparsity=0.9, seed=1))
        assert abs(matrix.nonzeros_per_cell().mean() - 100) <= 5
        assert matrix.stage == Stage.RAW_COUNTS

    def test_single_type(self):
        _, labels = synthesize_dataset(SyntheticSpec(n_cells=30, n_genes=50, n_cell_types=1))
        assert len(set(labels)) == 1

    def test_every_type_present(self):
        _, labels = synthesize_dataset(SyntheticSpec(n_cells=50, n_genes=50, n_cell_types=5))
        assert len(set(labels)) == 5

    def test_infeasible_sparsity(self):
        with pytest.raises(ValidationError):
            synthesize_dataset(SyntheticSpec(n_cells=10, n_genes=100, sparsity=0.999))

    def test_sparsity_bounds(self):
        with pytest.raises(ValidationError):
            SyntheticSpec(sparsity=1.0).validate()
