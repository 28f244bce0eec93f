import math

import numpy as np
import pytest

from sketchkrr.errors import ComputationError
from sketchkrr.kernels import kernel_matrix, periodic_sobolev
from sketchkrr.krr import fit_sketched
from sketchkrr.simulate import (
    MonteCarloConfig,
    adversarial_estimation_signal,
    adversarial_testing_signal,
    beta_mixture_data,
    gaussian_interaction_data,
    monte_carlo,
    phase_grid,
    run_replication,
)
from sketchkrr.sketch import data_dependent_sketch
from sketchkrr.spectral import eigendecompose
from sketchkrr.rng import substream


class TestBetaMixtureData:
    def test_zero_signal_is_pure_noise(self):
        xs, y, f = beta_mixture_data(100, 0.0, np.random.default_rng(0))
        assert np.all(f == 0.0)
        assert abs(y.mean()) < 0.5

    def test_boundary_vanishes(self):
        # both mixture components have shape parameters above 1
        from sketchkrr.simulate import _beta_pdf
        assert _beta_pdf(np.array([0.0]), 30, 17)[0] == 0.0
        assert _beta_pdf(np.array([0.0]), 3, 11)[0] == 0.0

    def test_mixture_mass_integrates_to_five(self):
        rng = np.random.default_rng(1)
        xs, _, f = beta_mixture_data(10 ** 6, 1.0, rng)
        assert f.mean() == pytest.approx(5.0, abs=0.02)

    def test_validation(self):
        with pytest.raises(ValueError):
            beta_mixture_data(0, 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            beta_mixture_data(10, -1.0, np.random.default_rng(0))


class TestGaussianInteractionData:
    def test_zero_signal(self):
        xs, y, f = gaussian_interaction_data(50, 0.0, np.random.default_rng(2))
        assert np.all(f == 0.0)
        assert xs.shape == (50, 3)

    def test_point_value(self):
        # deterministic rng stub pinning x = (1, 1, 1)
        class Stub:
            def standard_normal(self, shape):
                return np.ones(shape)
        xs, y, f = gaussian_interaction_data(1, 2.0, Stub(), noise_rng=np.random.default_rng(0))
        assert f[0] == pytest.approx(2.0 * 7.0)

    def test_mean_signal_is_first_moment(self):
        rng = np.random.default_rng(3)
        _, _, f = gaussian_interaction_data(10 ** 6, 1.0, rng)
        assert f.mean() == pytest.approx(1.0, abs=0.01)


@pytest.fixture(scope="module")
def eig128():
    rng = np.random.default_rng(4)
    xs = rng.uniform(0, 1, 128)
    K = kernel_matrix(periodic_sobolev(2), xs)
    return K, eigendecompose(K)


class TestAdversarialSignals:
    def test_estimation_rkhs_norm(self, eig128):
        _, eig = eig128
        f, alpha = adversarial_estimation_signal(eig, 8, C=3.0)
        norm_sq = 128 * np.sum(alpha ** 2 * eig.eigenvalues)
        assert norm_sq == pytest.approx(3.0, rel=1e-9)

    def test_estimation_empirical_norm_formula(self, eig128):
        _, eig = eig128
        s = 8
        f, _ = adversarial_estimation_signal(eig, s, C=1.0)
        expect = np.sum(eig.eigenvalues[s:2 * s]) / s
        assert np.sum(f ** 2) / 128 == pytest.approx(expect, rel=1e-9)

    def test_estimation_full_tail_window(self, eig128):
        _, eig = eig128
        f, alpha = adversarial_estimation_signal(eig, 64, C=1.0)
        assert np.count_nonzero(alpha) == 64

    def test_estimation_window_overflow(self, eig128):
        _, eig = eig128
        with pytest.raises(ValueError):
            adversarial_estimation_signal(eig, 65)

    def test_testing_rkhs_norm_and_empirical(self, eig128):
        _, eig = eig128
        s, g = 6, 2
        f, alpha = adversarial_testing_signal(eig, s, g, C=2.0)
        norm_sq = 128 * np.sum(alpha ** 2 * eig.eigenvalues)
        assert norm_sq == pytest.approx(2.0, rel=1e-9)
        window = slice(g * s, g * s + s - 1)
        expect = 2.0 / (s - 1) * np.sum(eig.eigenvalues[window])
        assert np.sum(f ** 2) / 128 == pytest.approx(expect, rel=1e-9)

    def test_testing_invisible_to_matched_sketch(self, eig128):
        # support disjoint from the sketch range: noiseless fit vanishes
        K, eig = eig128
        s = 5
        f, _ = adversarial_testing_signal(eig, s, 1, C=1.0)
        S = data_dependent_sketch(eig, s)
        fit = fit_sketched(K, f, 1e-6, S)
        assert np.linalg.norm(fit.fitted) <= 1e-8 * np.linalg.norm(f)

    def test_testing_g_zero_rejected(self, eig128):
        _, eig = eig128
        with pytest.raises(ValueError):
            adversarial_testing_signal(eig, 5, 0)

    def test_testing_overflow_rejected(self, eig128):
        _, eig = eig128
        with pytest.raises(ValueError):
            adversarial_testing_signal(eig, 16, 8)


class TestMonteCarlo:
    def test_replication_purity(self):
        cfg = MonteCarloConfig(n=64, reps=5, seed=123)
        a = run_replication(cfg, 3)
        b = run_replication(cfg, 3)
        assert a == b

    def test_single_rep_result(self):
        cfg = MonteCarloConfig(n=64, reps=1, seed=5)
        res = monte_carlo(cfg)
        assert res.rejection_rate in (0.0, 1.0)
        assert res.standard_error == 0.0

    def test_workers_match_serial(self):
        cfg1 = MonteCarloConfig(n=64, reps=12, seed=9, workers=1)
        cfg2 = MonteCarloConfig(n=64, reps=12, seed=9, workers=2,
                                keep_decisions=True)
        cfg1.keep_decisions = True
        r1, r2 = monte_carlo(cfg1), monte_carlo(cfg2)
        assert r1.decisions == r2.decisions
        assert r1.mean_z == r2.mean_z

    def test_abort_threshold(self):
        def broken(n, c, rng, noise_rng=None):
            raise ComputationError("boom")
        cfg = MonteCarloConfig(dgp=broken, n=64, reps=10, seed=1)
        with pytest.raises(ComputationError):
            monte_carlo(cfg)

    def test_explicit_lambda_and_s(self):
        cfg = MonteCarloConfig(n=64, reps=4, seed=2, s_rule=6, lambda_rule=1e-5)
        res = monte_carlo(cfg)
        assert res.s == 6
        assert res.median_lambda == 1e-5

    def test_size_within_nominal_band_pdk(self):
        cfg = MonteCarloConfig(n=512, reps=300, seed=31415,
                               s_rule=("gamma", 2.0, 2 / 9), lambda_rule="gcv")
        res = monte_carlo(cfg)
        assert res.rejection_rate <= 0.05 + 3 * max(res.standard_error, 0.0126)

    def test_size_within_nominal_band_edk(self):
        cfg = MonteCarloConfig(dgp="edk_gaussian", n=512, reps=300, seed=2718,
                               s_rule=("loggamma", 1.2, 1.5), lambda_rule="gcv")
        res = monte_carlo(cfg)
        assert res.rejection_rate <= 0.05 + 3 * max(res.standard_error, 0.0126)

    def test_monotone_power_in_signal_strength(self):
        rates = []
        for c in (0.0, 0.01, 0.02, 0.03):
            cfg = MonteCarloConfig(n=512, c=c, reps=200, seed=777,
                                   s_rule=("gamma", 2.0, 2 / 9), lambda_rule="gcv")
            rates.append(monte_carlo(cfg).rejection_rate)
        for lo, hi in zip(rates, rates[1:]):
            assert hi >= lo - 0.04

    def test_at_on_edk_rejected(self):
        cfg = MonteCarloConfig(dgp="edk_gaussian", test="at", n=64, reps=2, seed=0)
        with pytest.raises(ValueError):
            monte_carlo(cfg)


class TestPhaseGrid:
    def test_small_grid_shapes_and_determinism(self):
        spec = periodic_sobolev(2)
        kw = dict(n=64, lambda_grid=[1e-5, 1e-4], s_grid=[2, 4],
                  c_grid=[0.0, 0.3], reps=20, seed=55)
        a = phase_grid(spec, **kw)
        b = phase_grid(spec, **kw)
        assert a.power.shape == (2, 2, 2)
        assert np.array_equal(a.power, b.power)
        assert np.all((a.power >= 0) & (a.power <= 1))

    def test_duplicate_grid_points_identical(self):
        spec = periodic_sobolev(2)
        res = phase_grid(spec, 64, [1e-5, 1e-5], [3], [0.1], reps=15, seed=8)
        assert res.power[0, 0, 0] == res.power[1, 0, 0]

    def test_swds_proxy_detects_strong_signal(self):
        spec = periodic_sobolev(2)
        res = phase_grid(spec, 128, [1e-5], [6], [0.0, 1.0], reps=30, seed=4)
        assert res.swds_proxy[0, 0] == 1.0

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            phase_grid(periodic_sobolev(2), 64, [], [2], [0.1], 5, 0)
