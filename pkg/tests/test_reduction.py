import math

import numpy as np
import pytest
from scipy import stats

from latslr.errors import BadShape, NotKSparse, NotPartite, ZeroMatrix
from latslr.gadgets import build_g_partite
from latslr.lattice import BinaryBddInstance, LatticeBasis, lambda1_bin_exact, make_binary_bdd, sample_random_basis
from latslr.reduction import (
    SlrInstance,
    build_slr_instance,
    column_normalize,
    estimate_lambda1_hat,
    extract_bdd_solution,
    flood_noise_instance,
    flooding_tv_bound,
    planted_theta,
    reduce_and_solve,
    reduction_delta_gamma,
)
from latslr.solvers import SOLVERS, l0_partite_residuals, partite_index_to_theta

D, K, M = 8, 2, 136


def planted(seed, d=D, kappa=10.0, alpha=0.05, noise_ratio=1.0):
    rng = np.random.default_rng(seed)
    B = sample_random_basis(d, kappa, rng)
    return make_binary_bdd(B, alpha, noise_ratio, rng), rng


class TestParams:
    def test_formulas(self):
        inst, rng = planted(0)
        lam = inst.lambda1_bin
        slr, tr = build_slr_instance(inst, M, K, lam, rng)
        p = tr.params
        assert p.m1 == M - K and p.m == M
        assert p.delta**2 == pytest.approx(3 * p.m1 * lam**2 / (100 * M), rel=1e-14)
        g = max(3 * p.delta * math.sqrt(M), 100 * inst.basis.sigma_max * p.delta * math.sqrt(D * M) / (math.sqrt(K) * lam))
        assert p.gamma == pytest.approx(g, rel=1e-14)
        assert slr.delta == p.delta

    def test_gamma_gate(self):
        for seed in range(20):
            inst, rng = planted(seed, kappa=float(1 + seed))
            _, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
            assert tr.params.gamma_gate < 0.5

    def test_shape_checks(self):
        inst, rng = planted(1)
        with pytest.raises(BadShape):
            build_slr_instance(inst, M, 3, inst.lambda1_bin, rng)
        with pytest.raises(BadShape):
            build_slr_instance(inst, 17 * D - 1, K, inst.lambda1_bin, rng)

    def test_default_m(self):
        inst, rng = planted(2)
        slr, tr = build_slr_instance(inst, None, K, inst.lambda1_bin, rng)
        assert slr.m == 17 * D


class TestConstruction:
    def test_bottom_rows_and_blocks(self):
        inst, rng = planted(3)
        slr, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
        s = tr.shape
        np.testing.assert_array_equal(slr.X[-K:], tr.params.gamma * build_g_partite(s))
        np.testing.assert_array_equal(slr.y[-K:], np.full(K, tr.params.gamma))
        from latslr.gadgets import build_g_sparse

        np.testing.assert_allclose(slr.X[:-K], tr.R @ inst.basis.entries @ build_g_sparse(s), rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(slr.y[:-K], tr.R @ inst.target, rtol=1e-12)

    def test_zero_noise_planted_residual_is_zero(self):
        inst, rng = planted(4, noise_ratio=0.0)
        slr, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
        assert slr.residual_mse(planted_theta(inst, tr.shape)) < 1e-20 * np.abs(slr.y).max() ** 2
        assert slr.is_valid_solution(planted_theta(inst, tr.shape))

    def test_transcript_rebuild_bit_identical(self):
        inst, rng = planted(5)
        slr, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
        again = tr.rebuild()
        assert np.array_equal(again.X, slr.X) and np.array_equal(again.y, slr.y)
        fslr, ftr = flood_noise_instance(inst, M, K, 0.3, np.random.default_rng(1))
        assert ftr.rebuild() == fslr

    def test_seeded_build_is_reproducible(self):
        inst, _ = planted(6)
        a, ta = build_slr_instance(inst, M, K, inst.lambda1_bin, 77)
        b, tb = build_slr_instance(inst, M, K, inst.lambda1_bin, 77)
        assert a == b and ta.rng_seed == 77

    def test_completeness_implication_per_instance(self):
        # whenever ||R e||^2 < (5 m1 / 2) ||e||^2, the planted vector fits the budget
        hits = 0
        for seed in range(100):
            inst, rng = planted(seed, alpha=0.1)
            slr, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
            Re = tr.R @ inst.hidden_e
            if Re @ Re < 2.5 * tr.params.m1 * (inst.hidden_e @ inst.hidden_e):
                hits += 1
                assert slr.residual_mse(planted_theta(inst, tr.shape)) < slr.delta**2
        assert hits >= 95

    def test_completeness_rate_alpha_01(self):
        ok = 0
        for seed in range(200):
            inst, rng = planted(1000 + seed, alpha=0.1)
            slr, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
            ok += slr.residual_mse(planted_theta(inst, tr.shape)) < slr.delta**2
        assert ok >= 190

    @pytest.mark.parametrize("d,k", [(4, 2), (6, 2), (6, 1), (8, 2)])
    def test_soundness_by_enumeration(self, d, k):
        m = 17 * d
        for seed in range(10):
            inst, rng = planted(seed, d=d, alpha=0.1)
            slr, tr = build_slr_instance(inst, m, k, inst.lambda1_bin, rng)
            res = l0_partite_residuals(slr.X, slr.y, k, tr.shape) / m
            for idx in np.flatnonzero(res <= slr.delta**2):
                z = extract_bdd_solution(partite_index_to_theta(int(idx), slr.n, k), tr)
                np.testing.assert_array_equal(z, inst.hidden_z)

    def test_z_constant_band(self):
        ratios = []
        for seed in range(100):
            inst, rng = planted(seed, kappa=float(1 + seed % 20))
            _, tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)
            ratios.append(tr.params.Z / (inst.basis.sigma_max * math.sqrt(D / K)))
        c1, c2 = min(ratios), max(ratios)
        # Z tracks sigma_max sqrt(d/k) up to constants; record them and check they stay put
        print(f"Z / (sigma_max sqrt(d/k)) in [{c1:.3f}, {c2:.3f}]")
        assert 1.0 < c1 and c2 < 100.0 and c2 / c1 < 1.5


class TestLambdaHat:
    def test_exact_identity(self):
        assert list(estimate_lambda1_hat(LatticeBasis(np.eye(2)), "exact")) == [pytest.approx(2.0)]

    def test_doubling_diag(self):
        cands = list(estimate_lambda1_hat(LatticeBasis(np.diag([1.0, 3.0])), "doubling"))
        assert cands == pytest.approx([1.0, 2.0, 4.0])
        assert any(2.0 <= c < 4.0 for c in cands)

    def test_doubling_identity_4(self):
        assert list(estimate_lambda1_hat(LatticeBasis(np.eye(4)), "doubling")) == pytest.approx([1.0, 2.0])

    def test_doubling_brackets_lambda(self):
        for seed in range(30):
            inst, _ = planted(seed, d=6, kappa=float(1 + 3 * seed))
            lam = inst.lambda1_bin
            assert any(lam * (1 - 1e-12) <= c < 2 * lam for c in estimate_lambda1_hat(inst.basis, "doubling"))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            list(estimate_lambda1_hat(LatticeBasis(np.eye(2)), "guess"))


class TestColumnNormalize:
    def test_identity(self):
        Xt, Z = column_normalize(np.eye(2))
        assert Z == pytest.approx(1 / math.sqrt(2))
        np.testing.assert_allclose(np.linalg.norm(Xt, axis=0), math.sqrt(2))

    def test_long_column(self):
        X = np.zeros((4, 3))
        X[:, 1] = [10.0, 0, 0, 0]
        X[:, 2] = [1.0, 1, 0, 0]
        Xt, Z = column_normalize(X)
        assert Z == pytest.approx(5.0)
        assert np.linalg.norm(Xt[:, 1]) == pytest.approx(2.0)
        assert np.all(np.linalg.norm(Xt, axis=0) <= 2.0 + 1e-12)

    def test_idempotent(self, rng):
        Xt, _ = column_normalize(rng.standard_normal((30, 12)) * rng.uniform(0.1, 50, size=12))
        _, Z2 = column_normalize(Xt)
        assert abs(Z2 - 1) <= 1e-12

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            column_normalize(np.zeros((3, 2)))


class TestExtract:
    def setup_method(self):
        inst, rng = planted(8)
        self.inst = inst
        self.slr, self.tr = build_slr_instance(inst, M, K, inst.lambda1_bin, rng)

    def test_exact(self):
        theta = planted_theta(self.inst, self.tr.shape)
        np.testing.assert_array_equal(extract_bdd_solution(theta, self.tr), self.inst.hidden_z)

    def test_perturbed_rounds_back(self):
        theta = planted_theta(self.inst, self.tr.shape)
        theta[theta != 0] += 0.3
        np.testing.assert_array_equal(extract_bdd_solution(theta, self.tr), self.inst.hidden_z)

    def test_two_in_one_block(self):
        theta = np.zeros(self.tr.shape.n)
        theta[[0, 1]] = 1.0
        with pytest.raises(NotPartite):
            extract_bdd_solution(theta, self.tr)

    def test_too_dense(self):
        theta = planted_theta(self.inst, self.tr.shape)
        theta[np.flatnonzero(theta == 0)[0]] = 0.1
        with pytest.raises(NotKSparse):
            extract_bdd_solution(theta, self.tr)


class TestPipeline:
    def test_l0_pipeline_recovers(self):
        ok = 0
        for seed in range(100):
            inst, rng = planted(seed)
            rep = reduce_and_solve(inst, SOLVERS["l0_partite"], M, K, rng)
            ok += rep.solved and np.array_equal(rep.z_hat, inst.hidden_z)
            if rep.solved:
                assert rep.residual <= inst.alpha * inst.lambda1_bin + 1e-9
        assert ok >= 95

    def test_l0_pipeline_doubling(self):
        for seed in range(10):
            inst, rng = planted(seed)
            rep = reduce_and_solve(inst, SOLVERS["l0_partite"], M, K, rng, lambda_mode="doubling")
            assert rep.solved
            assert rep.lambda1_hat is not None

    def test_lasso_pipeline_identity_basis(self):
        ok = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            inst = make_binary_bdd(LatticeBasis(np.eye(D)), 1e-4, 1.0, rng)
            ok += reduce_and_solve(inst, SOLVERS["thresholded_lasso"], M, K, rng).solved
        assert ok >= 18

    def test_zero_solver_fails_cleanly(self):
        inst, rng = planted(9)
        rep = reduce_and_solve(inst, SOLVERS["zero"], M, K, rng)
        assert not rep.solved and rep.z_hat is None
        assert rep.residual == pytest.approx(np.linalg.norm(inst.target))
        assert rep.slr_residual_mse > 0
        assert "NotPartite" in rep.detail

    def test_solver_exception_is_reported(self):
        inst, rng = planted(10)

        def broken(slr, shape):
            raise RuntimeError("boom")

        rep = reduce_and_solve(inst, broken, M, K, rng)
        assert not rep.solved and "boom" in rep.detail

    def test_scale_equivariance(self):
        inst, _ = planted(11)
        c = 7.5
        scaled = BinaryBddInstance(
            LatticeBasis(c * inst.basis.entries), c * inst.target, inst.alpha, inst.hidden_z, c * inst.hidden_e
        )
        a, ta = build_slr_instance(inst, M, K, inst.get_lambda1_bin(), 5)
        b, tb = build_slr_instance(scaled, M, K, scaled.get_lambda1_bin(), 5)
        for name in ("delta", "gamma", "lambda1_hat"):
            assert getattr(tb.params, name) == pytest.approx(c * getattr(ta.params, name), rel=1e-9)
        ra = reduce_and_solve(inst, SOLVERS["l0_partite"], M, K, 5)
        rb = reduce_and_solve(scaled, SOLVERS["l0_partite"], M, K, 5)
        np.testing.assert_array_equal(ra.z_hat, rb.z_hat)


class TestFlooding:
    def test_sigma_zero_is_identical(self):
        inst, _ = planted(12)
        a, ta = build_slr_instance(inst, M, K, inst.get_lambda1_bin(), 3)
        b, tb = flood_noise_instance(inst, M, K, 0.0, 3)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
        assert tb.flood is None and tb.params.sigma_flood == 0.0

    def test_flood_recorded(self):
        inst, _ = planted(13)
        a, _ = build_slr_instance(inst, M, K, inst.get_lambda1_bin(), 3)
        b, tb = flood_noise_instance(inst, M, K, 0.5, 3)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_allclose(b.y - a.y, tb.flood, atol=1e-9)
        assert tb.params.sigma_flood == 0.5

    def test_marginals_are_gaussian(self):
        inst, _ = planted(14, noise_ratio=0.0)
        sigma = 0.7
        pooled = []
        for seed in range(20):
            slr, tr = flood_noise_instance(inst, M, K, sigma, seed)
            sd = math.sqrt(inst.target @ inst.target + sigma**2)
            pooled.append(slr.y[: tr.params.m1] / sd)
        assert stats.kstest(np.concatenate(pooled), "norm").pvalue > 0.01

    def test_recovery_under_flooding(self):
        ok = 0
        trials = 50
        for seed in range(trials):
            inst, rng = planted(seed, alpha=1e-5)
            sigma = inst.alpha * inst.lambda1_bin * M * math.sqrt(math.log(M))
            slr, tr = flood_noise_instance(inst, M, K, sigma, rng)
            theta = SOLVERS["l0_partite"](slr, tr.shape).theta_hat
            ok += np.array_equal(extract_bdd_solution(theta, tr), inst.hidden_z)
        assert ok >= 0.9 * trials

    def test_negative_sigma(self):
        inst, _ = planted(15)
        with pytest.raises(ValueError):
            flood_noise_instance(inst, M, K, -1.0, 0)

    def test_tv_bound_examples(self):
        assert flooding_tv_bound(0.0, 1.0) == 0.0
        assert flooding_tv_bound(1.0, 1.0) == 0.5
        assert flooding_tv_bound(1.0, 0.1) == 1.0
        with pytest.raises(ValueError):
            flooding_tv_bound(1.0, 0.0)


class TestSlrInstance:
    def test_validity(self):
        X = np.eye(3)
        slr = SlrInstance(X, np.array([1.0, 0, 0]), 0.1, 1)
        assert slr.is_valid_solution(np.array([1.0, 0, 0]))
        assert not slr.is_valid_solution(np.array([1.0, 0.01, 0]))
        assert not slr.is_valid_solution(np.zeros(3))

    def test_shape_validation(self):
        with pytest.raises(BadShape):
            SlrInstance(np.eye(3), np.zeros(2), 0.1, 1)
        with pytest.raises(BadShape):
            SlrInstance(np.eye(3), np.zeros(3), 0.1, 4)


def test_delta_gamma_helper_matches_params():
    inst, rng = planted(16)
    _, tr = build_slr_instance(inst, M, K, 3.0, rng)
    assert reduction_delta_gamma(inst.basis, M, K, 3.0) == (tr.params.delta, tr.params.gamma)


def test_doubling_covers_gap_above_last_power():
    # powers of two up to 2 sigma_max stop just below lambda1_bin here, so one more doubling is needed
    basis = LatticeBasis(np.array([[1.1, 0.9], [1.1, -0.7]]))
    lam = lambda1_bin_exact(basis)
    cands = list(estimate_lambda1_hat(basis, "doubling"))
    assert max(c for c in cands if c <= 2 * basis.sigma_max) < lam
    assert any(lam <= c < 2 * lam for c in cands)
