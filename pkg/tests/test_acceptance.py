"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the terminal summary (see ``conftest.py``). Monte
Carlo criteria use the package default seed and are never re-seeded.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS
from msrv.inference import NoiseMoments, build_scheme, h_integrals, hstar_variance, total_asymptotic_variance
from msrv.simulate import (
    GRID_KINDS,
    MODELS,
    NOISE_KINDS,
    SimConfig,
    decompose_error,
    gen_path,
    replication_seed,
    run_convergence_experiment,
    run_coverage_experiment,
    run_discretization_clt_experiment,
    run_noise_clt_experiment,
)
from msrv.weights import H_STAR, approxweight_scheme, check_h_conditions, gamma_sq, optimal_discrete_weights, quadrature

BASE = SimConfig(model="constant", sigma2=0.1, T=1.0, noise="gaussian", noise_scale=0.005, grid="equidistant")
N_LIST = [2**10, 2**12, 2**14, 2**16]


def record(key, ok, detail):
    ACCEPTANCE_RESULTS[key] = (bool(ok), detail)
    print(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def timed(fn, repeat=1):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


@pytest.fixture(scope="module")
def sweep():
    return timed(lambda: run_convergence_experiment(BASE.replace(replications=200), N_LIST, policy="sqrt", scheme="hstar"))


class TestExactWeights:
    def test_c01_exact_weight_oracle(self):
        optimal_discrete_weights((1, 2, 3), 3)  # warm-up
        s, dt = timed(lambda: optimal_discrete_weights((1, 2, 3), 3), repeat=20)
        w_err = float(np.max(np.abs(s.weights - np.array([-0.5, 0.0, 1.5]))))
        g = gamma_sq(s)
        ok = (
            w_err < 1e-12
            and abs(s.cond1_residual) < 1e-12
            and abs(s.cond2_residual) < 1e-12
            and abs(g - 2.0) < 1e-12
            and abs(g - 48 / (3 * 8)) < 1e-12
            and dt < 1e-3
        )
        record(1, ok, f"max|a-a*|={w_err:.1e} cond1={s.cond1_residual:.1e} cond2={s.cond2_residual:.1e} "
                      f"gamma_sq={g!r} time={dt * 1e3:.3f}ms")

    def test_c02_closed_form_equivalence(self):
        def run():
            worst_w, worst_g = 0.0, 0.0
            for M in range(2, 1001):
                a = approxweight_scheme(M)
                b = optimal_discrete_weights(np.arange(1, M + 1), M)
                worst_w = max(worst_w, float(np.max(np.abs(a.weights - b.weights))))
                target = 48.0 / (M * (M * M - 1))
                worst_g = max(worst_g, abs(gamma_sq(b) - target) / target, abs(gamma_sq(a) - target) / target)
            return worst_w, worst_g

        (worst_w, worst_g), dt = timed(run)
        ok = worst_w < 1e-12 and worst_g < 1e-10 and dt < 1.0
        record(2, ok, f"max|approx-optimal|={worst_w:.1e} max rel gamma err={worst_g:.1e} time={dt:.2f}s")


class TestConstants:
    def test_c03_quadrature_constants(self):
        def run():
            h_integrals.cache_clear()
            I = h_integrals(H_STAR)
            sq = quadrature(lambda x: H_STAR.h(x) ** 2, 0.0, 1.0)
            return I, sq, check_h_conditions(H_STAR)

        (I, sq, rep), dt = timed(run)
        errs = (abs(I.discretization - 39 / 35), abs(I.remainder - 3 / 5), abs(I.cross - 6 / 5))
        ok = max(errs) < 1e-10 and abs(sq - 12) < 1e-12 and abs(rep.cond3) < 1e-12 and abs(rep.cond4) < 1e-12
        ok = ok and dt < 1.0
        record(3, ok, f"integral errs={max(errs):.1e} |int h*^2-12|={abs(sq - 12):.1e} "
                      f"cond3={rep.cond3:.1e} cond4={rep.cond4:.1e} time={dt:.3f}s")

    def test_c04_variance_formula_consistency(self):
        grid = list(itertools.product([0.2, 0.5, 1.0, 2.0, 5.0], [1e-3, 1e-2, 0.1, 1.0], [1e-6, 1e-4, 1e-2, 0.1, 1.0]))
        assert len(grid) == 100

        def run():
            worst = 0.0
            for k, (c, eta, e2) in enumerate(grid):
                T = (0.5, 1.0, 2.0)[k % 3]
                qv = (0.05, 0.1, 0.4, 1.0)[k % 4]
                var_e2 = (2.0, 0.0, 5.0)[k % 3] * e2 * e2
                m = NoiseMoments(e2, var_e2 + e2 * e2, var_e2)
                general = total_asymptotic_variance(H_STAR, c, m, T, eta, qv).nu_sq
                special = hstar_variance(c, e2, var_e2, T, eta, qv)
                worst = max(worst, abs(general - special) / special)
            return worst

        worst, dt = timed(run)
        record(4, worst < 1e-10 and dt < 1.0, f"max rel diff={worst:.1e} over {len(grid)} points time={dt:.3f}s")


class TestRates:
    def test_c05_msrv_convergence_rate(self, sweep):
        result, dt = sweep
        slope = result.summary["slopes"]["msrv"]["rmse"]
        rmse = [row["msrv"]["rmse"] for row in result.summary["table"]]
        record(5, -0.33 <= slope <= -0.17,
               f"MSRV RMSE slope={slope:.4f} (target -1/4) rmse={[f'{r:.2e}' for r in rmse]} sweep time={dt:.1f}s")

    def test_c06_rate_separation(self, sweep):
        result, _ = sweep
        slope = result.summary["slopes"]["tsrv"]["rmse"]
        last = result.summary["table"][-1]
        ok = -0.25 <= slope <= -0.09 and last["msrv"]["rmse"] < last["tsrv"]["rmse"]
        record(6, ok, f"TSRV RMSE slope={slope:.4f} (target -1/6) at n=2^16 "
                      f"RMSE msrv={last['msrv']['rmse']:.3e} tsrv={last['tsrv']['rmse']:.3e}")

    def test_c07_rv_inconsistency(self, sweep):
        result, dt = sweep
        slope = result.summary["slopes"]["rv"]["bias"]
        record(7, 0.85 <= slope <= 1.15, f"RV bias slope={slope:.4f} (target 1) sweep time={dt:.1f}s")


class TestCLT:
    def test_c08_noise_clt(self):
        n = 2**14
        M = math.ceil(math.sqrt(n))
        result, dt = timed(lambda: run_noise_clt_experiment(BASE.replace(replications=1000), n=n, M=M))
        s = result.summary
        ratio, q_lo, q_hi = s["variance_ratio"], s["q025"], s["q975"]
        closed = abs(s["target_variance"] / s["closed_form_variance"] - 1)
        ok = abs(ratio - 1) <= 0.15 and abs(q_lo + 1.96) <= 0.15 and abs(q_hi - 1.96) <= 0.15 and closed < 1e-10
        ok = ok and dt < 120
        record(8, ok, f"n=2^14 M={M} var ratio={ratio:.4f} q2.5%={q_lo:.3f} q97.5%={q_hi:.3f} time={dt:.1f}s")

    def test_c09_discretization_clt(self):
        n = 2**14
        result, dt = timed(lambda: run_discretization_clt_experiment(BASE.replace(replications=500), n=n))
        ratio = result.summary["variance_ratio"]
        record(9, abs(ratio - 1) <= 0.20 and dt < 120,
               f"n=2^14 M={result.summary['M']} empirical/target={ratio:.4f} time={dt:.1f}s")

    def test_c10_ci_coverage(self):
        result, dt = timed(lambda: run_coverage_experiment(BASE.replace(replications=500), n=2**14, level=0.95))
        s = result.summary
        oracle, plugin = s["oracle"]["coverage"], s["plugin"]["coverage"]
        ok = 0.91 <= oracle <= 0.98 and abs(plugin - oracle) <= 0.04 and dt < 300
        record(10, ok, f"oracle={oracle:.3f} plugin={plugin:.3f} gap={plugin - oracle:+.3f} time={dt:.1f}s")


class TestStructure:
    def test_c11_decomposition_identity(self):
        def run():
            worst_rec, worst_eps, count = 0.0, 0.0, 0
            for model, grid, noise in itertools.product(MODELS, GRID_KINDS, NOISE_KINDS):
                cfg = BASE.replace(model=model, grid=grid, noise=noise, n=2**12)
                for r in range(3):
                    b = gen_path(cfg, replication_seed(cfg.seed, cfg.n, r))
                    e_sq = math.fsum(b.noise**2)
                    for kind, M in (("optimal", 64), ("hstar", 64), ("optimal", 9)):
                        d = decompose_error(b, build_scheme(kind, M))
                        worst_rec = max(worst_rec, d.reconstruction_error)
                        if kind == "optimal":
                            worst_eps = max(worst_eps, abs(d.epsilon_cancel_residual) / e_sq)
                        count += 1
            return worst_rec, worst_eps, count

        (worst_rec, worst_eps, count), dt = timed(run)
        ok = worst_rec <= 1e-9 and worst_eps <= 1e-10 and dt < 10
        record(11, ok, f"{count} decompositions: max rel reconstruction err={worst_rec:.1e} "
                       f"max eps residual/sum eps^2={worst_eps:.1e} time={dt:.2f}s")

    def test_c12_optimality(self):
        rng = np.random.default_rng(20240601)

        def run():
            violations, checked = 0, 0
            for M in (3, 10, 50):
                k = np.arange(1, M + 1, dtype=float)
                C = np.vstack((np.ones(M), 1.0 / k))
                b = np.array([1.0, 0.0])
                proj = C.T @ np.linalg.inv(C @ C.T)
                g_opt = gamma_sq(optimal_discrete_weights(k.astype(int)))
                for _ in range(1000):
                    a = rng.normal(size=M) * rng.uniform(0.1, 10)
                    a = a - proj @ (C @ a - b)
                    g = 4.0 * math.fsum((a / k) ** 2)
                    violations += g_opt > g * (1 + 1e-12)
                    checked += 1
            return violations, checked

        (violations, checked), dt = timed(run)
        record(12, violations == 0 and dt < 10, f"{violations} violations in {checked} projected schemes time={dt:.2f}s")
