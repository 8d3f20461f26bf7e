import math

import numpy as np
import pytest

from msrv.errors import ConfigError, InputError, MSRVWarning, ParameterError
from msrv.estimators import rv
from msrv.inference import build_scheme
from msrv.simulate import (
    GRID_KINDS,
    MODELS,
    NOISE_KINDS,
    SimConfig,
    compare_estimators,
    decompose_error,
    gen_noise,
    gen_path,
    noise_u_terms,
    replication_seed,
    run_convergence_experiment,
    run_coverage_experiment,
    run_noise_clt_experiment,
)


class TestSimConfig:
    def test_defaults_round_trip(self):
        c = SimConfig()
        assert SimConfig.from_dict(c.to_dict()) == c

    def test_unknown_keys(self):
        with pytest.raises(ConfigError, match="bogus"):
            SimConfig.from_dict({"n": 10, "bogus": 1})

    @pytest.mark.parametrize(
        "changes",
        [
            {"model": "jump"},
            {"noise": "cauchy"},
            {"noise": "student-t", "noise_df": 4},
            {"model": "deterministic", "vol_amplitude": 1.0},
            {"grid": "time-changed", "grid_warp": 1.5},
            {"n": 1},
            {"replications": 0},
            {"model": "stochastic", "sv_rho": 2.0},
        ],
    )
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            SimConfig(**changes)

    @pytest.mark.parametrize("noise", NOISE_KINDS)
    def test_noise_moments_match_draws(self, noise):
        c = SimConfig(noise=noise, noise_scale=0.5)
        eps = gen_noise(c, 400_000, np.random.default_rng(0))
        m = c.noise_moments()
        assert np.mean(eps**2) == pytest.approx(m.e2, rel=0.01)
        assert np.mean(eps**4) == pytest.approx(m.e4, rel=0.05)


class TestGenPath:
    def test_deterministic(self):
        c = SimConfig(n=256)
        a, b = gen_path(c, 3), gen_path(c, 3)
        np.testing.assert_array_equal(a.observed, b.observed)
        assert not np.array_equal(a.observed, gen_path(c, 4).observed)

    def test_latent_shared_across_noise_levels(self):
        c = SimConfig(n=256)
        a = gen_path(c, replication_seed(0, 256, 1))
        b = gen_path(c.replace(noise_scale=0.0), replication_seed(0, 256, 1))
        np.testing.assert_array_equal(a.latent, b.latent)

    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("grid", GRID_KINDS)
    def test_shapes_and_truth(self, model, grid):
        b = gen_path(SimConfig(model=model, grid=grid, n=512), 0)
        assert b.latent.shape == b.noise.shape == b.observed.shape == (513,)
        assert b.true_qv > 0 and b.true_eta_sq > 0
        np.testing.assert_array_equal(b.observed, b.latent + b.noise)

    def test_deterministic_vol_truth(self):
        c = SimConfig(model="deterministic", vol_amplitude=0.5, vol_periods=0.25, n=1000)
        b = gen_path(c, 0)
        # int_0^1 0.1 (1 + 0.5 sin(pi t / 2)) dt = 0.1 (1 + 1/pi)
        assert b.true_qv == pytest.approx(0.1 * (1 + 1 / math.pi), rel=1e-12)

    def test_constant_vol_rv_lln(self):
        c = SimConfig(noise_scale=0.0, n=1000)
        vals = np.array([rv(gen_path(c, replication_seed(1, 1000, r)).observed) for r in range(200)])
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - 0.1) < 3 * se

    def test_pure_noise_rv(self):
        c = SimConfig(sigma2=0.0, noise_scale=0.01, n=10**5)
        b = gen_path(c, 0)
        assert rv(b.observed) / (2 * b.n) == pytest.approx(1e-4, rel=0.02)

    def test_stochastic_truth_tracks_variance_path(self):
        b = gen_path(SimConfig(model="stochastic", n=2000, noise_scale=0.0), 5)
        assert rv(b.observed) == pytest.approx(b.true_qv, rel=0.15)


class TestDecomposition:
    @pytest.mark.parametrize("model", MODELS)
    @pytest.mark.parametrize("kind", ["optimal", "hstar"])
    def test_reconstruction(self, model, kind):
        b = gen_path(SimConfig(model=model, grid="time-changed", n=2048), 1)
        d = decompose_error(b, build_scheme(kind, 45))
        assert d.reconstruction_error < 1e-9

    def test_epsilon_cancellation(self):
        b = gen_path(SimConfig(n=2048), 2)
        d = decompose_error(b, build_scheme("optimal", 45))
        assert abs(d.epsilon_cancel_residual) <= 1e-10 * np.sum(b.noise**2)

    def test_zero_noise(self):
        b = gen_path(SimConfig(n=512, noise_scale=0.0), 0)
        d = decompose_error(b, build_scheme("optimal", 16))
        assert d.zeta == 0.0 and np.all(d.u_terms == 0.0)

    def test_scale_too_large(self):
        b = gen_path(SimConfig(n=64), 0)
        with pytest.raises(InputError):
            decompose_error(b, build_scheme("optimal", 80))

    def test_zeta_variance(self):
        c = SimConfig(replications=500)
        r = run_noise_clt_experiment(c, n=2**12, M=16)
        assert r.summary["variance_ratio"] == pytest.approx(1.0, abs=0.15)

    def test_u_terms_uncorrelated(self):
        c = SimConfig()
        scales = [1, 5, 20]
        u = np.array([
            noise_u_terms(gen_noise(c, 4096, np.random.default_rng(replication_seed(9, r))), scales)
            for r in range(5000)
        ])
        corr = np.corrcoef(u.T)
        assert np.max(np.abs(corr[np.triu_indices(3, 1)])) < 0.05

    def test_u_terms(self):
        eps = np.array([1.0, 2.0, -1.0, 0.5])
        # U_1 = -2 (2 - 2 - 0.5), U_2 = -(2/2) (-1 + 1)
        np.testing.assert_allclose(noise_u_terms(eps, [1, 2]), [1.0, 0.0])


class TestNoiseSkewness:
    def test_zeta_skewness_matches_quadratic_form(self):
        # zeta = e' A e with A_{ij} = -a_K / K for |i - j| = K; for Gaussian
        # noise its skewness is 8 tr(A^3) / (2 tr(A^2))^(3/2)
        n, M = 1024, 16
        scheme = build_scheme("optimal", M)
        A = np.zeros((n + 1, n + 1))
        for K, a in zip(scheme.scales, scheme.weights):
            idx = np.arange(n + 1 - K)
            A[idx + K, idx] = A[idx, idx + K] = -a / K
        A2 = A @ A
        exact = 8 * np.sum(A2 * A) / (2 * np.trace(A2)) ** 1.5
        c = SimConfig(replications=4000)
        z = np.array([row["zeta"] for row in run_noise_clt_experiment(c, n=n, M=M).rows])
        z = (z - z.mean()) / z.std()
        assert exact > 0.15
        assert np.mean(z**3) == pytest.approx(exact, abs=0.12)


class TestExperiments:
    def test_convergence_schema_and_determinism(self):
        c = SimConfig(replications=10)
        with pytest.warns(MSRVWarning):
            r1 = run_convergence_experiment(c, [256, 512, 1024, 2048])
        with pytest.warns(MSRVWarning):
            r2 = run_convergence_experiment(c, [256, 512, 1024, 2048])
        assert "fitted_slope" in r1.summary
        assert r1.summary["flags"]["insufficient_replications"]
        assert r1.to_csv() == r2.to_csv()
        assert len(r1.rows) == 40

    def test_convergence_needs_four_sizes(self):
        with pytest.raises(ParameterError):
            run_convergence_experiment(SimConfig(), [256, 512, 1024])

    def test_worker_count_does_not_change_results(self):
        c = SimConfig(replications=6)
        with pytest.warns(MSRVWarning):
            a = run_convergence_experiment(c, [128, 256, 512, 1024], workers=1)
        with pytest.warns(MSRVWarning):
            b = run_convergence_experiment(c, [128, 256, 512, 1024], workers=2)
        assert a.to_csv() == b.to_csv()

    def test_coverage_median_level(self):
        c = SimConfig(replications=500)
        r = run_coverage_experiment(c, n=2**14, level=0.5, modes=("oracle",))
        assert r.summary["oracle"]["coverage"] == pytest.approx(0.5, abs=0.06)

    def test_compare_zero_noise_rv_best(self):
        c = SimConfig(noise_scale=0.0, replications=100)
        r = compare_estimators(c, n=2**12, policy="sqrt")
        assert r.summary["ranking"][0] == "rv"

    def test_compare_common_paths(self):
        c = SimConfig(replications=3)
        r = compare_estimators(c, n=512)
        truth = [gen_path(c.replace(n=512), replication_seed(0, 512, i)).true_qv for i in range(3)]
        assert [row["true_qv"] for row in r.rows] == truth
