"""Growth bound matrix container invariants."""

import numpy as np
import pytest

from growthbound.errors import DimensionError, NumericError
from growthbound.gbm import Gbm


class TestValidation:
    def test_accepts_nonnegative_matrix(self):
        g = Gbm(np.array([[0.0, 1.5], [2.0, 0.0]]))
        assert g.n_out == 2 and g.n_in == 2

    def test_rejects_negative_entries(self):
        with pytest.raises(NumericError, match="nonnegative"):
            Gbm(np.array([[1.0, -0.1]]))

    def test_rejects_non_finite_entries(self):
        with pytest.raises(NumericError, match="finite"):
            Gbm(np.array([[np.inf, 0.0]]))
        with pytest.raises(NumericError, match="finite"):
            Gbm(np.array([[np.nan, 0.0]]))

    def test_rejects_non_matrix(self):
        with pytest.raises(DimensionError):
            Gbm(np.zeros(3))

    def test_matrix_is_frozen_copy(self):
        src = np.ones((2, 2))
        g = Gbm(src)
        src[0, 0] = 7.0
        assert g.matrix[0, 0] == 1.0
        with pytest.raises(ValueError):
            g.matrix[0, 0] = 3.0


class TestBlocks:
    def test_default_single_block(self):
        g = Gbm(np.ones((2, 3)))
        assert g.block_names() == ("x",)
        np.testing.assert_array_equal(g.block("x"), g.matrix)

    def test_named_blocks_slice_columns(self):
        m = np.arange(12.0).reshape(2, 6)
        g = Gbm(m, blocks=(("v", 0, 2), ("h", 2, 5), ("c", 5, 6)))
        np.testing.assert_array_equal(g.block("h"), m[:, 2:5])
        assert g.block_names() == ("v", "h", "c")

    def test_blocks_must_tile_without_gaps(self):
        with pytest.raises(DimensionError, match="tiling"):
            Gbm(np.ones((1, 4)), blocks=(("a", 0, 2), ("b", 3, 4)))
        with pytest.raises(DimensionError, match="tiling"):
            Gbm(np.ones((1, 4)), blocks=(("a", 0, 2), ("b", 1, 4)))

    def test_blocks_must_cover_every_column(self):
        with pytest.raises(DimensionError, match="cover"):
            Gbm(np.ones((1, 4)), blocks=(("a", 0, 3),))

    def test_unknown_block_name(self):
        g = Gbm(np.ones((1, 2)), blocks=(("v", 0, 2),))
        with pytest.raises(DimensionError, match="'h'"):
            g.block("h")

    def test_empty_block_allowed(self):
        g = Gbm(np.ones((2, 2)), blocks=(("v", 0, 2), ("c", 2, 2)))
        assert g.block("c").shape == (2, 0)


class TestSummaries:
    def test_total_sums_every_entry(self):
        g = Gbm(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert g.total() == 10.0

    def test_max_entry(self):
        g = Gbm(np.array([[1.0, 7.0], [3.0, 4.0]]))
        assert g.max_entry() == 7.0

    def test_max_entry_of_empty_matrix(self):
        g = Gbm(np.zeros((0, 3)), blocks=(("x", 0, 3),))
        assert g.max_entry() == 0.0
        assert g.total() == 0.0
