import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kanmix.errors import DimensionError, DomainError
from kanmix.numeric import SeededRng, matmul, reduce_moments, sample_normal, softmax_rows


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(np.eye(2), a), a)

    def test_zeros(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(a, np.zeros((2, 2))), np.zeros((2, 2)))

    def test_against_triple_loop(self):
        rng = SeededRng(42)
        a = rng.normal((5, 4))
        b = rng.normal((4, 3))
        # naive triple-loop oracle
        expect = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                acc = 0.0
                for k in range(4):
                    acc += a[i, k] * b[k, j]
                expect[i, j] = acc
        assert np.abs(matmul(a, b) - expect).max() < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))


class TestReduceMoments:
    def test_constant(self):
        mean, var = reduce_moments(np.array([3.0, 3.0, 3.0]), axis=0)
        assert mean == 3.0 and var == 0.0

    def test_two_point(self):
        mean, var = reduce_moments(np.array([1.0, 3.0]), axis=0)
        assert mean == 2.0 and var == 1.0  # ((1-2)^2 + (3-2)^2) / 2

    def test_two_pass_oracle(self):
        x = SeededRng(7).normal(100, 2.0, 3.0)
        mean, var = reduce_moments(x, axis=0)
        m = sum(x) / len(x)
        v = sum((xi - m) ** 2 for xi in x) / len(x)
        assert abs(mean - m) / abs(m) < 1e-12
        assert abs(var - v) / abs(v) < 1e-12

    def test_empty_axis(self):
        with pytest.raises(DomainError):
            reduce_moments(np.zeros((0,)), axis=0)


class TestSoftmaxRows:
    def test_symmetry(self):
        out = softmax_rows(np.array([[0.0, 0.0, 0.0]]))
        assert np.abs(out - 1.0 / 3.0).max() < 1e-15

    def test_shift_invariance_no_overflow(self):
        out = softmax_rows(np.array([[1000.0, 1000.0]]))
        assert np.all(np.isfinite(out))
        assert np.abs(out - 0.5).max() < 1e-15

    def test_closed_form(self):
        out = softmax_rows(np.array([[0.0, np.log(3.0)]]))
        assert np.abs(out - [0.25, 0.75]).max() < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(-50, 50), min_size=2, max_size=6),
                    min_size=1, max_size=4).filter(
                        lambda rows: len({len(r) for r in rows}) == 1))
    def test_rows_sum_to_one_and_shift_invariant(self, rows):
        x = np.array(rows)
        out = softmax_rows(x)
        assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-12
        shifted = softmax_rows(x + 17.0)
        assert np.abs(out - shifted).max() < 1e-12


class TestSeededRng:
    def test_bitwise_reproducible(self):
        a = SeededRng(0).normal((64,))
        b = SeededRng(0).normal((64,))
        assert np.array_equal(a, b)
        assert np.array_equal(SeededRng(0).uniform((64,)),
                              SeededRng(0).uniform((64,)))

    def test_streams_differ(self):
        assert not np.array_equal(SeededRng(0, 0).normal((16,)),
                                  SeededRng(0, 1).normal((16,)))

    def test_sigma_zero_degenerate(self):
        out = sample_normal(SeededRng(1), (100,), 2.5, 0.0)
        assert np.all(out == 2.5)

    def test_negative_sigma(self):
        with pytest.raises(DomainError):
            SeededRng(1).normal((4,), 0.0, -1.0)

    def test_moments_of_a_million_draws(self):
        draws = SeededRng(3).normal((1_000_000,), 0.0, 1.0)
        assert abs(draws.mean()) < 0.01
        assert 0.99 < draws.var() < 1.01

    def test_shifted_moments(self):
        draws = SeededRng(4).normal((1_000_000,), 5.0, 2.0)
        assert abs(draws.mean() - 5.0) < 0.05  # 1% of mu
        assert abs(draws.std() - 2.0) < 0.02
