import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from latslr.clwe import (
    ClweSample,
    build_slr_from_clwe,
    clwe_alpha,
    clwe_delta,
    clwe_n,
    distinguish,
    mod1,
    sample_clwe,
    sample_null,
)
from latslr.errors import BadShape
from latslr.gadgets import partite_matrix
from latslr.solvers import l0_bruteforce_partite


class TestMod1:
    def test_examples(self):
        assert mod1(0.7) == pytest.approx(-0.3)
        assert mod1(-0.5) == -0.5
        assert mod1(0.5) == -0.5
        assert mod1(3.0) == 0.0

    def test_vectorized(self):
        np.testing.assert_allclose(mod1(np.array([0.7, 1.25, -1.75])), [-0.3, 0.25, 0.25])

    @settings(max_examples=300, deadline=None)
    @given(x=st.floats(-1e6, 1e6, allow_nan=False), z=st.integers(-10, 10))
    def test_properties(self, x, z):
        r = mod1(x)
        assert -0.5 <= r < 0.5
        assert mod1(r) == r
        assert abs(r) <= abs(x)
        assert float(x - r).is_integer()
        assert mod1(x + z) == pytest.approx(r, abs=1e-9) or abs(abs(r) - 0.5) < 1e-9


class TestSampling:
    def test_clwe_invariants(self, rng):
        s = sample_clwe(6, 40, 3.0, 0.01, rng)
        assert s.provenance == "clwe"
        assert np.linalg.norm(s.hidden_s) == pytest.approx(3.0, abs=1e-9)
        assert np.all((s.b >= -0.5) & (s.b < 0.5))
        assert s.A.shape == (6, 40) and s.b.shape == (40,)

    def test_noiseless_single_column(self, rng):
        s = sample_clwe(5, 1, 2.0, 0.0, rng)
        assert s.b[0] == mod1(float(s.hidden_s @ s.A[:, 0]))

    def test_error_variance_from_secret(self, rng):
        beta = 0.01
        s = sample_clwe(8, 10_000, 4.0, beta, rng)
        e = mod1(s.b - s.hidden_s @ s.A)
        assert np.var(e) == pytest.approx(beta**2, rel=0.05)

    def test_null_uniform(self, rng):
        s = sample_null(3, 10_000, rng)
        assert s.provenance == "null" and s.hidden_s is None
        assert stats.kstest(s.b + 0.5, "uniform").pvalue > 0.01
        assert abs(s.b.mean()) <= 3 / math.sqrt(12) / 100

    def test_null_inner_product_uniform(self, rng):
        v = np.array([1, -2, 0, 3])
        draws = [mod1(float(sample_null(1, 4, rng).b @ v)) for _ in range(10_000)]
        assert stats.kstest(np.array(draws) + 0.5, "uniform").pvalue > 0.01

    def test_sample_validation(self):
        with pytest.raises(BadShape):
            ClweSample(np.zeros((2, 3)), np.zeros(2), 1.0, 0.0, "null")
        with pytest.raises(ValueError):
            ClweSample(np.zeros((2, 3)), np.array([0.0, 0.5, 0.0]), 1.0, 0.0, "null")
        with pytest.raises(ValueError):
            ClweSample(np.zeros((2, 3)), np.zeros(3), 1.0, 0.0, "other")
        with pytest.raises(ValueError):
            sample_clwe(2, 3, 0.0, 0.1, 0)

    def test_without_secret(self, rng):
        s = sample_clwe(3, 4, 1.0, 0.0, rng)
        assert s.without_secret().hidden_s is None
        assert s.without_secret() != s


class TestEmbedding:
    def test_delta_value(self):
        assert clwe_delta(4.0, 4, 1) == pytest.approx(1 / (400 * math.sqrt(5)))
        assert clwe_delta(4.0, 4, 1) == pytest.approx(1.1180e-3, rel=1e-4)

    def test_alpha(self):
        assert clwe_alpha(0.03, 16) == 4.0
        assert clwe_alpha(1.0, 1) == 1.0
        assert clwe_alpha(1e-3, 4) == pytest.approx(30.0)

    def test_blocks(self, rng):
        s = sample_clwe(4, 12, 2.0, 0.0, rng)
        inst = build_slr_from_clwe(s, 3)
        a = inst.alpha_scale
        assert a == pytest.approx(math.sqrt(12))
        np.testing.assert_array_equal(inst.slr.X[:4], s.A)
        np.testing.assert_array_equal(inst.slr.X[4:], a * partite_matrix(12, 3))
        np.testing.assert_array_equal(inst.slr.y, np.r_[np.zeros(4), np.full(3, a)])
        assert inst.slr.delta == clwe_delta(2.0, 4, 3)

    def test_k_must_divide_n(self, rng):
        with pytest.raises(BadShape):
            build_slr_from_clwe(sample_clwe(2, 10, 1.0, 0.0, rng), 3)

    def test_null_needs_gamma(self, rng):
        with pytest.raises(ValueError):
            build_slr_from_clwe(sample_null(2, 4, rng), 2)
        assert build_slr_from_clwe(sample_null(2, 4, rng), 2, 1.5).gamma_clwe == 1.5

    def test_sizing_helper(self):
        assert clwe_n(16, 4, 0.3) == 128
        assert clwe_n(16, 4, 0.3) % 4 == 0


class TestDistinguisher:
    def test_zero_b(self):
        s = ClweSample(np.zeros((2, 4)), np.zeros(4), 1.0, 0.0, "null")
        assert distinguish(s, np.array([0.9, 0, 0, 3.2])) == 1

    def test_length_checked(self):
        s = ClweSample(np.zeros((2, 4)), np.zeros(4), 1.0, 0.0, "null")
        with pytest.raises(BadShape):
            distinguish(s, np.zeros(3))

    def test_null_frequency(self, rng):
        theta = np.array([1.0, 0, 0, 1, 0, 0])
        hits = sum(distinguish(sample_null(2, 6, rng), theta) for _ in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 0.02

    def test_planted_with_true_solution(self):
        # small secret norm so partite solutions within the budget exist for 2-sparse theta
        m, k, n, gamma, beta = 2, 2, 128, 0.05, 1e-3
        found = ones = 0
        for seed in range(100):
            s = sample_clwe(m, n, gamma, beta, seed)
            inst = build_slr_from_clwe(s, k)
            theta = l0_bruteforce_partite(inst.slr.X, inst.slr.y, k).theta_hat
            if inst.slr.is_valid_solution(theta):
                found += 1
                ones += distinguish(s, theta)
        assert found >= 50
        assert ones >= 0.9 * found
