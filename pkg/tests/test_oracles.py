"""The oracles must themselves be trustworthy; these tests pin them down."""

import numpy as np
import pytest
import scipy.stats

from growthbound.errors import DataError, DimensionError
from growthbound.intervals import BoxInterval
from growthbound.oracles import (
    FdConfig,
    box_corners,
    enumerate_substitutions,
    fd_gradient,
    fd_jacobian,
    grid_minmax,
    substitution_count,
)


class TestFiniteDifferences:
    def test_recovers_affine_map_exactly(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 5))
        b = rng.normal(size=3)
        res = fd_jacobian(lambda x: a @ x + b, rng.normal(size=5))
        assert not res.flagged.any()
        np.testing.assert_allclose(res.jacobian, a, atol=1e-8)

    def test_matches_tanh_derivative(self):
        x = np.array([-1.3, 0.0, 0.4, 2.1])
        res = fd_jacobian(np.tanh, x)
        np.testing.assert_allclose(np.diag(res.jacobian), 1 - np.tanh(x) ** 2, atol=1e-8)

    def test_scalar_gradient_shape(self):
        res = fd_gradient(lambda z: float(z @ z), np.array([1.0, -2.0, 3.0]))
        assert res.jacobian.shape == (3,)
        np.testing.assert_allclose(res.jacobian, [2.0, -4.0, 6.0], atol=1e-8)

    def test_flags_relu_kink(self):
        # 0.4 * step: both the full and the half step straddle the corner and
        # disagree with each other, which is exactly what the flag is for
        cfg = FdConfig(step=1e-6)
        res = fd_gradient(
            lambda z: float(np.maximum(z, 0.0).sum()), np.array([0.4e-6, 5.0]), cfg
        )
        assert res.flagged[0]
        assert not res.flagged[1]

    def test_clean_drops_flagged_columns(self):
        cfg = FdConfig(step=1e-6)
        res = fd_jacobian(
            lambda z: np.maximum(z, 0.0), np.array([0.4e-6, 5.0, -3.0]), cfg
        )
        assert res.clean().shape == (3, 2)

    def test_rejects_matrix_input(self):
        with pytest.raises(DimensionError):
            fd_jacobian(lambda z: z, np.zeros((2, 2)))


class TestGridMinmax:
    def test_sine_extrema(self):
        lo, hi = grid_minmax(np.sin, -4.0, 4.0)
        assert lo == pytest.approx(-1.0, abs=1e-8)
        assert hi == pytest.approx(1.0, abs=1e-8)


class TestBoxCorners:
    def test_enumerates_all_corners(self):
        box = BoxInterval([0.0, -1.0], [2.0, 5.0])
        corners = {tuple(c) for c in box_corners(box)}
        assert corners == {(0, -1), (0, 5), (2, -1), (2, 5)}

    def test_degenerate_box(self):
        box = BoxInterval([1.0], [1.0])
        assert [tuple(c) for c in box_corners(box)] == [(1.0,), (1.0,)]

    def test_refuses_huge_boxes(self):
        box = BoxInterval(np.zeros(25), np.ones(25))
        with pytest.raises(DataError, match="2\\^25"):
            list(box_corners(box))


class FakeTable:
    """Duck-typed synonym source exposing only ``alternatives``."""

    def __init__(self, alts):
        self.alts = alts

    def alternatives(self, word):
        return self.alts.get(word, ())


SYN = {"a": ["a1", "a2"], "b": ["b1", "b2"], "c": ["c1", "c2"]}


class TestEnumeration:
    def test_counts_candidate_products(self):
        assert substitution_count(["a", "b", "c"], SYN) == 27
        assert substitution_count(["x", "a"], SYN) == 3
        assert substitution_count([], SYN) == 1

    def test_exhaustive_three_cubed(self):
        out = list(enumerate_substitutions(["a", "b", "c"], SYN))
        assert len(out) == 27
        assert len(set(out)) == 27
        assert out[0] == ("a", "b", "c")
        assert ("a2", "b1", "c2") in out

    def test_accepts_alternatives_object(self):
        table = FakeTable({"a": ("a1",)})
        assert list(enumerate_substitutions(["a"], table)) == [("a",), ("a1",)]

    def test_cap_is_enforced_before_yielding(self):
        gen = enumerate_substitutions(["a", "b", "c"], SYN, cap=26)
        with pytest.raises(DataError, match="27"):
            next(gen)

    def test_sample_mode_is_uniform_per_position(self):
        rng = np.random.default_rng(7)
        draws = list(
            enumerate_substitutions(
                ["a"], SYN, mode="sample", n_samples=3000, rng=rng
            )
        )
        assert len(draws) == 3000
        counts = [sum(1 for d in draws if d[0] == w) for w in ("a", "a1", "a2")]
        assert scipy.stats.chisquare(counts).pvalue > 0.01

    def test_sample_mode_requires_rng(self):
        with pytest.raises(DataError, match="rng"):
            list(enumerate_substitutions(["a"], SYN, mode="sample"))

    def test_unknown_mode(self):
        with pytest.raises(DataError, match="mode"):
            list(enumerate_substitutions(["a"], SYN, mode="beam"))

    def test_unsupported_container(self):
        with pytest.raises(DataError, match="container"):
            substitution_count(["a"], object())
