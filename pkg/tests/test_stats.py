import math

import numpy as np
import pytest

from nyridge.errors import ConfigError, VacuousBoundError
from nyridge.lowrank import nystrom, sample_columns
from nyridge.stats import (
    RankSweeper,
    bias_variance,
    bias_variance_from_eigs,
    default_lambda_grid,
    dof,
    dof_from_eigs,
    dof_report,
    fit_rate,
    lowrank_bias_variance,
    optimal_lambda,
    sufficient_rank,
    theorem_rank_bound,
    verify_lemma_tail,
    verify_theorem,
)
from nyridge.synthetic import SpectrumSpec, draw_noise, grid_problem


def random_psd(n, seed, cond_floor=1e-4):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    ev = 10.0 ** rng.uniform(np.log10(cond_floor), 0.0, size=n)
    return (q * ev) @ q.T


class TestDof:
    def test_scaled_identity(self):
        # K = c I: every quantity collapses to n c / (c + n lambda)
        n, c, lam = 2, 1.0, 0.5
        d_max, d_trace, d_ave = dof(c * np.eye(n), lam)
        assert d_max == pytest.approx(1.0, abs=1e-12)
        assert d_trace == pytest.approx(1.0, abs=1e-12)
        assert d_ave * (c + n * lam) / c == pytest.approx(1.0, abs=1e-12)

    def test_projection_limit(self):
        K = random_psd(12, 0, cond_floor=1e-2)
        lam = 1e-12 * np.linalg.eigvalsh(K)[-1] / 12
        d_max, d_trace, d_ave = dof(K, lam)
        for d in (d_max, d_trace, d_ave):
            assert abs(d - 12) <= 1e-3

    def test_matches_inverse_oracle(self):
        # independent route: dense matrix inverse, no eigendecomposition
        K = random_psd(6, 1)
        lam = 0.07
        M = K @ np.linalg.inv(K + 6 * lam * np.eye(6))
        d_max, d_trace, d_ave = dof(K, lam)
        assert d_max == pytest.approx(6 * np.max(np.diag(M)), rel=1e-10)
        assert d_trace == pytest.approx(np.trace(M), rel=1e-10)
        assert d_ave == pytest.approx(np.trace(M @ M), rel=1e-10)

    def test_chain_inequality(self):
        for seed in range(20):
            K = random_psd(15, seed)
            lam = 10.0 ** np.random.default_rng(seed).uniform(-8, 0)
            d_max, d_trace, d_ave = dof(K, lam)
            assert d_max >= d_trace - 1e-10 * 15
            assert d_trace >= d_ave - 1e-10 * 15
            assert d_ave >= 0

    def test_dof_from_eigs_matches_dense_for_circulant(self):
        prob = grid_problem(36, SpectrumSpec.polynomial(1, 2.0), 0.0)
        lam = 1e-2
        dense = dof(prob.K.entries, lam)
        spectral = dof_from_eigs(prob.exact_eigs, lam)
        assert dense[0] == pytest.approx(spectral[0], rel=1e-6)
        assert dense[1] == pytest.approx(spectral[1], rel=1e-8)
        assert dense[2] == pytest.approx(spectral[2], rel=1e-8)


class TestBiasVariance:
    def test_zero_signal_zero_bias(self):
        K = random_psd(10, 2)
        b, v = bias_variance(K, np.zeros(10), 1.0, 0.1)
        assert b == 0.0
        assert v > 0

    def test_zero_noise_zero_variance(self):
        K = random_psd(10, 3)
        z = np.random.default_rng(4).normal(size=10)
        b, v = bias_variance(K, z, 0.0, 0.1)
        assert v == 0.0
        assert b > 0

    def test_identity_kernel_closed_form(self):
        n, lam, sigma2 = 7, 0.2, 0.5
        z = np.random.default_rng(5).normal(size=n)
        b, v = bias_variance(np.eye(n), z, sigma2, lam)
        shrink = (1 + n * lam) ** 2
        assert v == pytest.approx(sigma2 / shrink, rel=1e-12)
        assert b == pytest.approx(n * lam**2 * (z @ z) / shrink, rel=1e-12)

    def test_monte_carlo_oracle(self):
        # closed form within 3 standard errors of a simulated mean
        n, trials = 40, 800
        prob = grid_problem(n, SpectrumSpec.polynomial(1, 2.0), 0.0)
        K = prob.K.entries
        z = prob.z
        sigma2 = 0.25
        lam = 5e-3
        S = K @ np.linalg.inv(K + n * lam * np.eye(n))
        eps = draw_noise(n, sigma2, trials, seed=6)
        errs = np.array([np.mean((S @ (z + e) - z) ** 2) for e in eps])
        mc_mean = errs.mean()
        mc_se = errs.std(ddof=1) / np.sqrt(trials)
        b, v = bias_variance(K, z, sigma2, lam)
        assert abs((b + v) - mc_mean) <= 3 * mc_se

    def test_monotonicity_in_lambda(self):
        K = random_psd(12, 7)
        z = np.random.default_rng(8).normal(size=12)
        lams = np.geomspace(1e-6, 1.0, 10)
        biases, variances = zip(*(bias_variance(K, z, 1.0, lam) for lam in lams))
        assert all(a <= b + 1e-14 for a, b in zip(biases, biases[1:]))
        assert all(a >= b - 1e-14 for a, b in zip(variances, variances[1:]))

    def test_lowrank_path_matches_dense(self):
        K = random_psd(30, 9)
        z = np.random.default_rng(10).normal(size=30)
        F = nystrom(K, sample_columns(30, 8, 11))
        lam, sigma2 = 3e-3, 0.7
        b1, v1 = lowrank_bias_variance(F.phi, z, sigma2, lam)
        b2, v2 = bias_variance(F.gram(), z, sigma2, lam)
        assert b1 == pytest.approx(b2, rel=1e-8)
        assert v1 == pytest.approx(v2, rel=1e-8)

    def test_variance_of_approximation_never_larger(self):
        K = random_psd(25, 12)
        z = np.random.default_rng(13).normal(size=25)
        _, v_full = bias_variance(K, z, 1.0, 1e-3)
        for p in (2, 8, 20):
            F = nystrom(K, sample_columns(25, p, p))
            _, v_low = lowrank_bias_variance(F.phi, z, 1.0, 1e-3)
            assert v_low <= v_full + 1e-12

    def test_spectral_path_matches_dense_on_grid(self):
        prob = grid_problem(32, SpectrumSpec.polynomial(1, 3.0), 0.2)
        coef2 = np.abs(np.fft.fft(prob.z)) ** 2 / 32
        lam = 2e-3
        b1, v1 = bias_variance_from_eigs(prob.exact_eigs, coef2, 0.2, lam)
        b2, v2 = bias_variance(prob.K.entries, prob.z, 0.2, lam)
        assert b1 == pytest.approx(b2, rel=1e-8)
        assert v1 == pytest.approx(v2, rel=1e-8)


class TestDofReport:
    def test_fields_consistent(self):
        K = random_psd(9, 14)
        z = np.random.default_rng(15).normal(size=9)
        rep = dof_report(K, z, 0.3, 0.05)
        assert rep.d_max >= rep.d_trace >= rep.d_ave >= 0
        assert 0 <= rep.d_ave <= 9
        assert rep.bias >= 0 and rep.variance >= 0
        assert rep.n == 9 and rep.lam == 0.05


class TestTheoremRankBound:
    def test_worked_example(self):
        d, delta, n, r2, lam = 10.0, 0.25, 400, math.pi**2 / 3, 1e-3
        expect = math.ceil((32 * d / delta + 2) * math.log(n * r2 / (delta * lam)))
        got = theorem_rank_bound(d, delta, n, r2, lam)
        assert got == expect
        assert got == 19841  # (32 d / delta + 2) log(...) = 1282 log(5.2638e6)

    def test_delta_near_one_with_zero_dof(self):
        n, r2, lam = 100, 2.0, 1e-2
        delta = 1 - 1e-12
        got = theorem_rank_bound(0.0, delta, n, r2, lam)
        assert got == math.ceil(2 * math.log(n * r2 / (delta * lam)))

    def test_linear_in_dof(self):
        n, r2, lam, delta = 400, 3.0, 1e-4, 0.5
        d = 7.0
        diff = theorem_rank_bound(2 * d, delta, n, r2, lam) - theorem_rank_bound(
            d, delta, n, r2, lam
        )
        expect = (32 * d / delta) * math.log(n * r2 / (delta * lam))
        assert abs(diff - expect) <= 1.0  # rounding of the two ceilings

    def test_vacuous_bound_signaled(self):
        with pytest.raises(VacuousBoundError):
            theorem_rank_bound(1.0, 0.5, 1, 1e-12, 1e6)

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            theorem_rank_bound(1.0, 1.5, 10, 1.0, 0.1)
        with pytest.raises(ConfigError):
            theorem_rank_bound(1.0, 0.5, 10, 1.0, 0.0)


class TestVerifyTheorem:
    def test_full_rank_ratio_is_one(self):
        prob = grid_problem(40, SpectrumSpec.polynomial(1, 3.0), 0.5)
        check = verify_theorem(prob, lam=1e-2, delta=0.25, p=40, trials=5, seed=0)
        assert check.ratio_mean == pytest.approx(1.0, abs=1e-8)
        assert check.holds

    def test_zero_signal_ratio_below_one(self):
        prob = grid_problem(30, SpectrumSpec.polynomial(1, 3.0), 0.5)
        prob.z = np.zeros(30)
        check = verify_theorem(prob, lam=1e-3, delta=0.25, p=6, trials=20, seed=1)
        assert np.all(check.ratios <= 1.0 + 1e-12)

    def test_reports_high_probability_quantile(self):
        prob = grid_problem(36, SpectrumSpec.polynomial(1, 3.0), 0.3)
        check = verify_theorem(prob, lam=5e-3, delta=0.25, p=10, trials=25, seed=2)
        assert 0.0 <= check.frac_above_threshold <= 1.0
        assert check.high_prob_threshold == pytest.approx((1 - 0.125) ** -2)
        assert check.trials == 25 and check.p == 10


class TestVerifyLemma:
    def test_t_above_lambda_max_has_zero_probability(self):
        rng = np.random.default_rng(3)
        psi = rng.normal(size=(60, 8))
        lam_max = np.linalg.eigvalsh(psi.T @ psi / 60)[-1]
        rows = verify_lemma_tail(psi, p=10, t_grid=[1.01 * lam_max], trials=200, seed=4)
        assert rows[0][1] == 0.0

    def test_full_subset_no_deviation(self):
        rng = np.random.default_rng(5)
        psi = rng.normal(size=(40, 6))
        rows = verify_lemma_tail(psi, p=40, t_grid=[1e-10, 0.1], trials=50, seed=6)
        assert all(emp == 0.0 for _, emp, _ in rows)

    def test_empirical_below_bound(self):
        rng = np.random.default_rng(7)
        psi = rng.normal(size=(120, 10))
        lam_max = np.linalg.eigvalsh(psi.T @ psi / 120)[-1]
        t_grid = lam_max * np.geomspace(0.05, 1.0, 8)
        rows = verify_lemma_tail(psi, p=30, t_grid=t_grid, trials=2000, seed=8)
        for t, emp, bound in rows:
            assert emp <= bound + 1e-12
            assert 0 <= bound <= 1.0


class TestSufficientRank:
    def test_huge_lambda_needs_rank_one(self):
        prob = grid_problem(36, SpectrumSpec.polynomial(1, 3.0), 0.5)
        p = sufficient_rank(prob, lam=1e4, tol=0.01, trials=3, method="random", seed=0)
        assert p == 1

    def test_huge_tolerance_needs_rank_one(self):
        prob = grid_problem(36, SpectrumSpec.polynomial(1, 3.0), 0.5)
        p = sufficient_rank(prob, lam=1e-3, tol=1e9, trials=3, method="random", seed=1)
        assert p == 1

    def test_pivoted_deterministic_and_reasonable(self):
        prob = grid_problem(48, SpectrumSpec.polynomial(1, 3.0), 0.5)
        lams = optimal_lambda(prob)
        p1 = sufficient_rank(prob, lams.lambda_star, method="pivoted", seed=0)
        p2 = sufficient_rank(prob, lams.lambda_star, method="pivoted", seed=99)
        assert p1 == p2
        assert 1 <= p1 <= 48

    def test_sweeper_error_matches_direct_nystrom(self):
        prob = grid_problem(30, SpectrumSpec.polynomial(1, 3.0), 0.4)
        sw = RankSweeper(prob, trials=4, seed=5)
        lam = 1e-2
        # recompute the mean closed-form error with independent nystrom calls
        from nyridge.lowrank import ColumnSelection, nystrom as ny
        from nyridge.stats import _rng_for

        p = 7
        direct = []
        for t in range(4):
            order = _rng_for(5, t).permutation(30)
            sel = ColumnSelection(order[:p], "uniform-random", 30)
            F = ny(prob.K.entries, sel)
            b, v = lowrank_bias_variance(F.phi, prob.z, prob.sigma2, lam)
            direct.append(b + v)
        assert sw.error("random", p, lam) == pytest.approx(np.mean(direct), rel=1e-8)


class TestOptimalLambda:
    def test_zero_signal_picks_largest(self):
        prob = grid_problem(24, SpectrumSpec.polynomial(1, 2.0), 0.5)
        prob.z = np.zeros(24)
        choice = optimal_lambda(prob)
        grid = default_lambda_grid(prob.K.trace() / 24)
        assert choice.lambda_star == pytest.approx(grid[-1])
        assert not choice.saturated

    def test_zero_noise_picks_smallest_and_flags(self):
        prob = grid_problem(24, SpectrumSpec.polynomial(1, 2.0), 0.0)
        choice = optimal_lambda(prob)
        assert choice.saturated
        grid = default_lambda_grid(prob.K.trace() / 24)
        assert choice.lambda_star <= grid[1]

    def test_refinement_improves_or_matches_grid(self):
        prob = grid_problem(40, SpectrumSpec.polynomial(1, 3.0), 0.3)
        choice = optimal_lambda(prob)
        grid = default_lambda_grid(prob.K.trace() / 40)
        from nyridge.stats import bias_variance as bv

        grid_best = min(sum(bv(prob.K.entries, prob.z, prob.sigma2, l)) for l in grid)
        assert choice.error_star <= grid_best + 1e-15

    def test_rejects_bad_grid(self):
        prob = grid_problem(16, SpectrumSpec.polynomial(1, 2.0), 0.1)
        with pytest.raises(ConfigError):
            optimal_lambda(prob, grid=[1e-3, 1e-4])


class TestFitRate:
    def test_exact_power_law(self):
        ns = [32, 64, 128, 256, 512]
        fit = fit_rate([(n, 3.7 * n**-1.25) for n in ns])
        assert fit.exponent == pytest.approx(-1.25, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_noisy_power_law(self):
        rng = np.random.default_rng(9)
        ns = np.array([64, 128, 256, 512, 1024, 2048])
        vals = 2.0 * ns**0.4 * (1 + 0.01 * rng.standard_normal(ns.size))
        fit = fit_rate(list(zip(ns, vals)))
        assert abs(fit.exponent - 0.4) <= 0.05

    def test_constant_values(self):
        fit = fit_rate([(n, 5.0) for n in (10, 20, 40, 80)])
        assert abs(fit.exponent) <= 1e-12

    def test_validation(self):
        with pytest.raises(ConfigError):
            fit_rate([(10, 1.0), (20, 2.0), (40, 3.0)])
        with pytest.raises(ConfigError):
            fit_rate([(10, 1.0), (20, -2.0), (40, 3.0), (80, 4.0)])
