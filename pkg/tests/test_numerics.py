import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisylab.numerics import (Rng, check_prob_vector, sample_beta,
                               sample_categorical, softmax)


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3)

    def test_hand_value(self):
        # e^0 / (e^0 + 3) = 0.25
        assert np.allclose(softmax([0.0, np.log(3.0)]), [0.25, 0.75])

    def test_shift_invariance(self):
        base = softmax([1.0, 2.0, 3.0])
        for shift in (-650.0, 0.0, 100.0, 650.0):
            assert np.allclose(softmax(np.array([1.0, 2.0, 3.0]) + shift),
                               base, atol=1e-12)

    def test_no_overflow_at_700(self):
        out = softmax([700.0, -700.0])
        assert np.all(np.isfinite(out))
        assert abs(out.sum() - 1.0) < 1e-12

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            softmax([np.inf, 0.0])
        with pytest.raises(ValueError):
            softmax([np.nan, 0.0])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(min_value=-700, max_value=700), min_size=1,
                    max_size=10))
    def test_always_valid_prob_vector(self, logits):
        check_prob_vector(softmax(logits))


class TestRng:
    def test_equal_seeds_equal_streams(self):
        a, b = Rng(123), Rng(123)
        assert np.array_equal(a.uniform(10_000), b.uniform(10_000))

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).uniform(100), Rng(2).uniform(100))

    def test_split_streams_independent_and_reproducible(self):
        kids1 = Rng(5).split(3)
        kids2 = Rng(5).split(3)
        for k1, k2 in zip(kids1, kids2):
            assert np.array_equal(k1.uniform(100), k2.uniform(100))
        assert not np.array_equal(kids1[0].uniform(100),
                                  kids1[1].uniform(100))

    def test_requires_seed(self):
        with pytest.raises(ValueError):
            Rng()


class TestSampleCategorical:
    def test_degenerate(self):
        rng = Rng(0)
        assert all(sample_categorical([1.0, 0.0, 0.0], rng) == 0
                   for _ in range(20))

    def test_same_seed_same_sequence(self):
        p = [0.2, 0.3, 0.5]
        s1 = [sample_categorical(p, Rng(7)) for _ in range(1)]
        r1, r2 = Rng(11), Rng(11)
        assert ([sample_categorical(p, r1) for _ in range(200)]
                == [sample_categorical(p, r2) for _ in range(200)])

    def test_binomial_frequency(self):
        # 3 sigma of Binomial(1e5, 0.5) is ~0.0047
        rng = Rng(7)
        draws = np.array([sample_categorical([0.5, 0.5], rng)
                          for _ in range(100_000)])
        assert abs((draws == 0).mean() - 0.5) < 0.0047

    def test_invalid_vector(self):
        with pytest.raises(ValueError):
            sample_categorical([0.5, 0.4], Rng(0))


class TestSampleBeta:
    def test_support(self):
        rng = Rng(2)
        for alpha in (0.2, 1.0, 5.0):
            for _ in range(100):
                assert 0.0 <= sample_beta(alpha, rng) <= 1.0

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            sample_beta(0.0, Rng(1))
        with pytest.raises(ValueError):
            sample_beta(-1.0, Rng(1))

    def test_moments_symmetric(self):
        rng = Rng(3)
        xs = np.array([sample_beta(0.2, rng) for _ in range(100_000)])
        assert abs(xs.mean() - 0.5) < 0.01
        var_expected = 1.0 / (4.0 * (2 * 0.2 + 1))  # 0.17857
        assert abs(xs.var() - var_expected) < 0.1 * var_expected

    def test_deterministic(self):
        xs = [sample_beta(0.2, Rng(9)) for _ in range(1)]
        r1, r2 = Rng(9), Rng(9)
        assert ([sample_beta(0.2, r1) for _ in range(50)]
                == [sample_beta(0.2, r2) for _ in range(50)])
