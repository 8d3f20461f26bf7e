"""Simulation of noisy Itô paths and the Monte Carlo experiments built on them.

Latent log-prices follow ``dX = mu dt + sigma_t dB`` on the observation grid;
observations are ``Y = X + eps`` with i.i.d. noise. Randomness comes from a
single master seed: replication ``r`` at size ``n`` draws from the
``SeedSequence`` substream with spawn key ``(n, r)``, and within a path the
latent and noise draws use separate child streams, so a zero-noise and a
noisy configuration with the same seed share the latent path.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, InputError, MSRVWarning, ParameterError
from .estimators import TickSeries, WeightScheme, lag_rvs, msrv, rv, tsrv
from .grid import SamplingGrid, time_change
from .inference import (
    NoiseMoments,
    build_scheme,
    choose_m,
    confidence_interval,
    discretization_variance,
    estimate,
    noise_term_variance,
    total_asymptotic_variance,
    variance_coefficients,
)
from .weights import H_STAR, gamma_sq, lindeberg_ratio

MODELS = ("constant", "deterministic", "stochastic")
NOISE_KINDS = ("gaussian", "two-point", "student-t")
GRID_KINDS = ("equidistant", "time-changed")
MIN_CONVERGENCE_REPS = 50
MIN_COVERAGE_REPS = 200


@dataclass(frozen=True)
class SimConfig:
    """Path model, noise law, sampling grid and Monte Carlo size.

    ``deterministic`` volatility is
    ``sigma_t^2 = sigma2 * (1 + vol_amplitude * sin(2 pi vol_periods t / T))``.
    ``stochastic`` volatility is a mean-reverting square-root variance
    (rate ``sv_kappa``, level ``sv_theta``, vol-of-vol ``sv_xi``, correlation
    ``sv_rho``) simulated by full-truncation Euler on a grid ``sv_substeps``
    times finer than the observation grid. ``time-changed`` grids use
    ``g(u) = u + grid_warp * T / (2 pi) * sin(2 pi u / T)``.
    ``noise_scale`` is the standard deviation of the noise.
    """

    model: str = "constant"
    sigma2: float = 0.1
    vol_amplitude: float = 0.5
    vol_periods: float = 1.0
    sv_kappa: float = 5.0
    sv_theta: float = 0.1
    sv_xi: float = 0.3
    sv_rho: float = -0.5
    sv_v0: Optional[float] = None
    sv_substeps: int = 10
    drift: float = 0.0
    noise: str = "gaussian"
    noise_scale: float = 0.005
    noise_df: float = 8.0
    grid: str = "equidistant"
    grid_warp: float = 0.5
    n: int = 4096
    T: float = 1.0
    seed: int = 0
    replications: int = 200

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.noise not in NOISE_KINDS:
            raise ConfigError(f"noise must be one of {NOISE_KINDS}")
        if self.grid not in GRID_KINDS:
            raise ConfigError(f"grid must be one of {GRID_KINDS}")
        if self.noise == "student-t" and not self.noise_df > 4:
            raise ConfigError("student-t noise needs df > 4 for a finite fourth moment")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be nonnegative")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if self.model == "deterministic" and not abs(self.vol_amplitude) < 1:
            raise ConfigError("vol_amplitude must lie in (-1, 1) to keep sigma bounded away from 0")
        if self.model == "stochastic":
            if self.sv_kappa <= 0 or self.sv_theta <= 0 or self.sv_xi < 0:
                raise ConfigError("stochastic vol needs sv_kappa > 0, sv_theta > 0, sv_xi >= 0")
            if not -1 <= self.sv_rho <= 1:
                raise ConfigError("sv_rho must lie in [-1, 1]")
            if self.sv_substeps < 1:
                raise ConfigError("sv_substeps must be positive")
            if self.sv_v0 is not None and self.sv_v0 < 0:
                raise ConfigError("sv_v0 must be nonnegative")
        if self.grid == "time-changed" and not abs(self.grid_warp) < 1:
            raise ConfigError("grid_warp must lie in (-1, 1)")
        if self.n < 2 or self.T <= 0:
            raise ConfigError("need n >= 2 and T > 0")
        if self.replications < 1 or self.seed < 0:
            raise ConfigError("replications must be positive and seed nonnegative")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def noise_moments(self) -> NoiseMoments:
        """True moments of the configured noise law."""
        s2 = self.noise_scale**2
        if self.noise == "gaussian":
            e4 = 3.0 * s2 * s2
        elif self.noise == "two-point":
            e4 = s2 * s2
        else:
            df = self.noise_df
            e4 = 3.0 * (df - 2.0) / (df - 4.0) * s2 * s2
        return NoiseMoments(s2, e4, e4 - s2 * s2, "supplied")

    def spot_var(self, t):
        """sigma_t^2 for the constant and deterministic models."""
        t = np.asarray(t, dtype=float)
        if self.model == "constant":
            return np.full(t.shape, self.sigma2)
        if self.model == "deterministic":
            w = 2 * math.pi * self.vol_periods / self.T
            return self.sigma2 * (1.0 + self.vol_amplitude * np.sin(w * t))
        raise ParameterError("stochastic volatility has no deterministic spot variance")

    def make_grid(self, n: Optional[int] = None) -> SamplingGrid:
        n = self.n if n is None else n
        base = SamplingGrid.equidistant(n, self.T)
        if self.grid == "equidistant":
            return base
        T, warp = self.T, self.grid_warp
        return time_change(base, lambda u: u + warp * T / (2 * math.pi) * np.sin(2 * math.pi * u / T))


@dataclass(frozen=True, eq=False)
class PathBundle:
    grid: SamplingGrid
    latent: np.ndarray
    noise: np.ndarray
    observed: np.ndarray
    true_qv: float
    true_eta_sq: float
    noise_moments: NoiseMoments

    @property
    def series(self) -> TickSeries:
        return TickSeries(self.grid, self.observed)

    @property
    def n(self) -> int:
        return self.grid.n


def replication_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def _child(ss: np.random.SeedSequence, k: int) -> np.random.Generator:
    # explicit spawn keys keep gen_path a pure function of its seed argument
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (k,)))


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _deterministic_integrals(config: SimConfig, t: np.ndarray):
    """Per-interval integrals of sigma^2 and sigma^4 for the sine model."""
    a, b = t[:-1], t[1:]
    w = 2 * math.pi * config.vol_periods / config.T
    amp, s2 = config.vol_amplitude, config.sigma2
    dt = b - a
    # cos(wb) - cos(wa) and sin(2wb) - sin(2wa) in cancellation-free form
    dcos = -2.0 * np.sin(0.5 * w * (a + b)) * np.sin(0.5 * w * dt)
    dsin2 = 2.0 * np.cos(w * (a + b)) * np.sin(w * dt)
    int_s2 = s2 * (dt - amp / w * dcos)
    int_s4 = s2 * s2 * (dt - 2.0 * amp / w * dcos + amp * amp * (0.5 * dt - dsin2 / (4.0 * w)))
    return int_s2, int_s4


def gen_noise(config: SimConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    a = config.noise_scale
    if config.noise == "gaussian":
        return a * rng.standard_normal(n + 1)
    if config.noise == "two-point":
        return a * (2.0 * rng.integers(0, 2, size=n + 1) - 1.0)
    df = config.noise_df
    return a * math.sqrt((df - 2.0) / df) * rng.standard_t(df, size=n + 1)


def gen_path(config: SimConfig, seed=None) -> PathBundle:
    """One latent path on the configured grid plus i.i.d. noise."""
    ss = _as_seedseq(config.seed if seed is None else seed)
    grid = config.make_grid()
    n, T = grid.n, grid.horizon
    dt = grid.increments
    lat_rng = _child(ss, 0)

    if config.model == "stochastic":
        s = config.sv_substeps
        fine_dt = np.repeat(dt / s, s)
        z_v = lat_rng.standard_normal(fine_dt.size)
        z_x = lat_rng.standard_normal(fine_dt.size)
        v0 = config.sv_theta if config.sv_v0 is None else config.sv_v0
        v = np.maximum(
            _kernels.euler_full_truncation(v0, config.sv_kappa, config.sv_theta, config.sv_xi, fine_dt, z_v),
            0.0,
        )
        rho = config.sv_rho
        w = rho * z_v + math.sqrt(1.0 - rho * rho) * z_x
        fine_dx = config.drift * fine_dt + np.sqrt(v * fine_dt) * w
        dx = fine_dx.reshape(n, s).sum(axis=1)
        int_s2 = (v * fine_dt).reshape(n, s).sum(axis=1)
        int_s4 = (v * v * fine_dt).reshape(n, s).sum(axis=1)
    else:
        if config.model == "constant":
            int_s2 = config.sigma2 * dt
            int_s4 = config.sigma2**2 * dt
        else:
            int_s2, int_s4 = _deterministic_integrals(config, grid.times)
        dx = config.drift * dt + np.sqrt(int_s2) * lat_rng.standard_normal(n)

    latent = np.concatenate(([0.0], np.cumsum(dx)))
    noise = gen_noise(config, n, _child(ss, 1))
    observed = latent + noise
    true_qv = _kernels.compensated_sum(int_s2)
    # slope of the interpolated finite-n AQVT is (n/T) dt_i on interval i
    true_eta = _kernels.compensated_sum(n / T * dt * int_s4)
    for arr in (latent, noise, observed):
        arr.flags.writeable = False
    return PathBundle(grid, latent, noise, observed, true_qv, true_eta, config.noise_moments())


# ---------------------------------------------------------------------------
# error decomposition


def noise_u_terms(noise: np.ndarray, scales) -> np.ndarray:
    """``U_{n,K} = -(2/K) sum_{i>=K} eps_i eps_{i-K}`` for each scale."""
    k = np.asarray(scales, dtype=np.int64)
    return -2.0 / k * _kernels.lag_products(np.ascontiguousarray(noise), k)


def noise_zeta(noise: np.ndarray, scheme: WeightScheme) -> float:
    return math.fsum(scheme.weights * noise_u_terms(noise, scheme.scales))


@dataclass(frozen=True)
class ErrorDecomposition:
    msrv: float
    signal: float
    zeta: float
    remainder: float
    epsilon_cancel_residual: float
    noise_e2: float
    u_terms: np.ndarray = field(repr=False)

    @property
    def reconstruction(self) -> float:
        return math.fsum(
            [self.signal, self.epsilon_cancel_residual, self.zeta, self.remainder, 2.0 * self.noise_e2]
        )

    @property
    def reconstruction_error(self) -> float:
        scale = max(abs(self.msrv), abs(self.reconstruction), np.finfo(float).tiny)
        return abs(self.msrv - self.reconstruction) / scale


def decompose_error(bundle: PathBundle, scheme: WeightScheme) -> ErrorDecomposition:
    """Split the MSRV into signal, noise martingale, noise energy and remainder.

    ``msrv = signal + 2 (sum a/K) sum eps^2 + zeta + R_n + 2 E eps^2`` holds
    exactly; ``R_n = sum a_i V_{n,K_i} - 2 E eps^2`` uses the true ``E eps^2``.
    """
    k = scheme.scales
    n = bundle.n
    if k.max() > n:
        raise InputError(f"scale {int(k.max())} exceeds n={n}")
    a = scheme.weights
    x, eps = bundle.latent, bundle.noise
    signal = math.fsum(a * lag_rvs(x, k))
    u = noise_u_terms(eps, k)
    zeta = math.fsum(a * u)
    e_sq = eps * eps
    xe = _kernels.lag_cross_sums(x, eps, k) / k
    edges = np.array([math.fsum(e_sq[:K]) + math.fsum(e_sq[n - K + 1:]) for K in k])
    v_terms = 2.0 * xe - edges / k
    e2 = bundle.noise_moments.e2
    remainder = math.fsum(a * v_terms) - 2.0 * e2
    eps_term = 2.0 * math.fsum(a / k) * math.fsum(e_sq)
    return ErrorDecomposition(
        msrv(bundle.observed, scheme), signal, zeta, remainder, eps_term, e2, u
    )


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    """Per-replication rows plus a JSON-ready summary."""

    kind: str
    rows: list
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        if not self.rows:
            return ""
        writer = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _pmap(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def tsrv_scale(n: int) -> int:
    return min(n, max(2, math.ceil(n ** (2.0 / 3.0))))


def _oracle_coefficients(bundle: PathBundle):
    return variance_coefficients(
        H_STAR, bundle.noise_moments, bundle.grid.horizon, bundle.true_eta_sq, bundle.true_qv
    )


def _msrv_with_policy(bundle: PathBundle, policy: str, scheme: str):
    coefficients = _oracle_coefficients(bundle) if policy == "plugin" else None
    M, _, _ = choose_m(bundle.n, policy, coefficients)
    return msrv(bundle.observed, build_scheme(scheme, M)), M


def _convergence_rep(task):
    config, n, r, policy, scheme, estimators, tsrv_k = task
    b = gen_path(config.replace(n=n), replication_seed(config.seed, n, r))
    row = {"n": n, "rep": r, "true_qv": b.true_qv}
    if "rv" in estimators:
        row["rv"] = rv(b.observed)
    if "tsrv" in estimators:
        k = tsrv_k or tsrv_scale(n)
        row["tsrv_k"] = k
        row["tsrv"] = tsrv(b.observed, k)
    if "msrv" in estimators:
        row["msrv"], row["M"] = _msrv_with_policy(b, policy, scheme)
    return row


def _error_stats(est, truth):
    err = np.asarray(est) - np.asarray(truth)
    return {
        "bias": float(err.mean()),
        "sd": float(err.std(ddof=1)) if err.size > 1 else 0.0,
        "rmse": float(math.sqrt(np.mean(err * err))),
    }


def run_convergence_experiment(
    config: SimConfig,
    n_list: Sequence[int],
    policy: str = "sqrt",
    scheme: str = "hstar",
    estimators: Sequence[str] = ("msrv", "tsrv", "rv"),
    tsrv_k: Optional[int] = None,
    workers: int = 1,
) -> ExperimentResult:
    """Monte Carlo bias/RMSE per sample size and log-log RMSE slopes.

    ``policy`` selects M for the MSRV (``plugin`` uses the true moments and
    quarticity); TSRV uses ``K = ceil(n^(2/3))`` unless ``tsrv_k`` is given.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ParameterError("n_list must hold at least 4 increasing sizes")
    unknown = set(estimators) - {"msrv", "tsrv", "rv"}
    if unknown:
        raise ParameterError(f"unknown estimators {sorted(unknown)}")
    reps = config.replications
    flags = {"insufficient_replications": reps < MIN_CONVERGENCE_REPS}
    if flags["insufficient_replications"]:
        warnings.warn(f"only {reps} replications per size", MSRVWarning, stacklevel=2)
    tasks = [
        (config, n, r, policy, scheme, tuple(estimators), tsrv_k) for n in n_list for r in range(reps)
    ]
    rows = _pmap(_convergence_rep, tasks, workers)

    table = []
    for n in n_list:
        sub = [row for row in rows if row["n"] == n]
        truth = [row["true_qv"] for row in sub]
        entry = {"n": n}
        for est in estimators:
            entry[est] = _error_stats([row[est] for row in sub], truth)
        if "msrv" in estimators:
            entry["M"] = sub[0]["M"]
        if "tsrv" in estimators:
            entry["tsrv_k"] = sub[0]["tsrv_k"]
        table.append(entry)
    slopes = {}
    for est in estimators:
        rmse = [e[est]["rmse"] for e in table]
        bias = [abs(e[est]["bias"]) for e in table]
        slopes[est] = {
            "rmse": _slope(n_list, rmse),
            "bias": _slope(n_list, bias) if all(b > 0 for b in bias) else float("nan"),
        }
    summary = {
        "experiment": "convergence",
        "n_list": n_list,
        "replications": reps,
        "policy": policy,
        "scheme": scheme,
        "table": table,
        "slopes": slopes,
        "fitted_slope": slopes["msrv"]["rmse"] if "msrv" in slopes else None,
        "flags": flags,
    }
    return ExperimentResult("convergence", rows, summary)


def _coverage_rep(task):
    config, n, r, level, policy, scheme, modes = task
    b = gen_path(config.replace(n=n), replication_seed(config.seed, n, r))
    row = {"rep": r, "true_qv": b.true_qv}
    if "oracle" in modes:
        value, M = _msrv_with_policy(b, policy, scheme)
        var = total_asymptotic_variance(
            H_STAR, M / math.sqrt(n), b.noise_moments, b.grid.horizon, b.true_eta_sq, b.true_qv
        )
        lo, hi = confidence_interval(value, var.nu_sq, n, level)
        row.update(oracle_estimate=value, oracle_M=M, oracle_lower=lo, oracle_upper=hi,
                   oracle_covered=int(lo <= b.true_qv <= hi))
    if "plugin" in modes:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MSRVWarning)
            rep = estimate(b.series, level=level, m_policy=policy, scheme=scheme)
        if rep.interval is None:
            lo = hi = rep.msrv
        else:
            lo, hi = rep.interval
        row.update(plugin_estimate=rep.msrv, plugin_M=rep.M, plugin_lower=lo, plugin_upper=hi,
                   plugin_covered=int(lo <= b.true_qv <= hi))
    return row


def run_coverage_experiment(
    config: SimConfig,
    n: Optional[int] = None,
    level: float = 0.95,
    policy: str = "sqrt",
    scheme: str = "hstar",
    modes: Sequence[str] = ("oracle", "plugin"),
    workers: int = 1,
) -> ExperimentResult:
    """Empirical coverage of the CLT interval for the true integrated variance.

    ``oracle`` mode plugs the true noise moments, quarticity and integrated
    variance into the asymptotic variance; ``plugin`` mode runs the same
    estimation path as the CLI.
    """
    n = config.n if n is None else int(n)
    if not 0 < level < 1:
        raise ParameterError("level must lie in (0, 1)")
    unknown = set(modes) - {"oracle", "plugin"}
    if unknown:
        raise ParameterError(f"unknown modes {sorted(unknown)}")
    reps = config.replications
    flags = {"insufficient_replications": reps < MIN_COVERAGE_REPS}
    if flags["insufficient_replications"]:
        warnings.warn(f"only {reps} replications for a coverage study", MSRVWarning, stacklevel=2)
    tasks = [(config, n, r, level, policy, scheme, tuple(modes)) for r in range(reps)]
    rows = _pmap(_coverage_rep, tasks, workers)
    summary = {"experiment": "coverage", "n": n, "level": level, "replications": reps,
               "policy": policy, "scheme": scheme, "flags": flags}
    for mode in modes:
        hits = np.array([row[f"{mode}_covered"] for row in rows], dtype=float)
        p = float(hits.mean())
        half = np.array([row[f"{mode}_upper"] - row[f"{mode}_lower"] for row in rows]) / 2
        summary[mode] = {
            "coverage": p,
            "binomial_se": math.sqrt(p * (1 - p) / reps),
            "mean_half_width": float(half.mean()),
        }
    if "oracle" in modes and "plugin" in modes:
        summary["plugin_minus_oracle"] = summary["plugin"]["coverage"] - summary["oracle"]["coverage"]
    return ExperimentResult("coverage", rows, summary)


def _compare_rep(task):
    config, n, r, policy, scheme, k = task
    b = gen_path(config.replace(n=n), replication_seed(config.seed, n, r))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MSRVWarning)
        rep = estimate(b.series, m_policy=policy, scheme=scheme, tsrv_k=k)
    return {"rep": r, "true_qv": b.true_qv, "rv": rep.rv, "tsrv": rep.tsrv, "msrv": rep.msrv,
            "M": rep.M, "tsrv_k": k}


def compare_estimators(
    config: SimConfig,
    n: Optional[int] = None,
    policy: str = "plugin",
    scheme: str = "optimal",
    workers: int = 1,
) -> ExperimentResult:
    """RV, TSRV and MSRV evaluated on identical simulated paths."""
    n = config.n if n is None else int(n)
    k = tsrv_scale(n)
    tasks = [(config, n, r, policy, scheme, k) for r in range(config.replications)]
    rows = _pmap(_compare_rep, tasks, workers)
    truth = [row["true_qv"] for row in rows]
    table = {}
    for est in ("rv", "tsrv", "msrv"):
        stats = _error_stats([row[est] for row in rows], truth)
        stats["variance"] = stats["sd"] ** 2
        table[est] = stats
    ranking = sorted(table, key=lambda e: table[e]["rmse"])
    summary = {"experiment": "compare", "n": n, "replications": config.replications,
               "policy": policy, "scheme": scheme, "tsrv_k": k, "table": table,
               "ranking": ranking}
    return ExperimentResult("compare", rows, summary)


def _noise_clt_rep(task):
    config, n, r, scheme = task
    ss = replication_seed(config.seed, n, r)
    eps = gen_noise(config, n, _child(ss, 1))
    return {"rep": r, "zeta": noise_zeta(eps, scheme)}


def run_noise_clt_experiment(
    config: SimConfig,
    n: Optional[int] = None,
    M: Optional[int] = None,
    scheme: str = "optimal",
    workers: int = 1,
) -> ExperimentResult:
    """Distribution of the pure-noise error ``zeta_n`` against its normal limit."""
    n = config.n if n is None else int(n)
    M = math.ceil(math.sqrt(n)) if M is None else int(M)
    sch = build_scheme(scheme, M)
    e2 = config.noise_moments().e2
    target = noise_term_variance(sch, n, e2)
    tasks = [(config, n, r, sch) for r in range(config.replications)]
    rows = _pmap(_noise_clt_rep, tasks, workers)
    zeta = np.array([row["zeta"] for row in rows])
    z = zeta / math.sqrt(target)
    for row, zi in zip(rows, z):
        row["standardized"] = float(zi)
    summary = {
        "experiment": "noise_clt",
        "n": n,
        "M": M,
        "scheme": scheme,
        "replications": config.replications,
        "gamma_sq": gamma_sq(sch),
        "target_variance": target,
        "closed_form_variance": 48.0 * n * e2 * e2 / (M * (M * M - 1)),
        "empirical_variance": float(zeta.var(ddof=1)),
        "variance_ratio": float(zeta.var(ddof=1) / target),
        "q025": float(np.quantile(z, 0.025)),
        "q975": float(np.quantile(z, 0.975)),
        "lindeberg_ratio": lindeberg_ratio(sch),
    }
    return ExperimentResult("noise_clt", rows, summary)


def _disc_clt_rep(task):
    config, n, r, scheme = task
    b = gen_path(config.replace(n=n, noise_scale=0.0), replication_seed(config.seed, n, r))
    signal = math.fsum(scheme.weights * lag_rvs(b.latent, scheme.scales))
    M = scheme.M
    return {"rep": r, "true_qv": b.true_qv, "true_eta_sq": b.true_eta_sq, "signal": signal,
            "scaled_error": math.sqrt(n / M) * (signal - b.true_qv)}


def run_discretization_clt_experiment(
    config: SimConfig,
    n: Optional[int] = None,
    M: Optional[int] = None,
    scheme: str = "hstar",
    workers: int = 1,
) -> ExperimentResult:
    """Variance of ``(n/M)^(1/2) (sum a_i [X,X]^(i) - <X,X>)`` against its limit."""
    n = config.n if n is None else int(n)
    M = math.ceil(math.sqrt(n)) if M is None else int(M)
    sch = build_scheme(scheme, M)
    tasks = [(config, n, r, sch) for r in range(config.replications)]
    rows = _pmap(_disc_clt_rep, tasks, workers)
    err = np.array([row["scaled_error"] for row in rows])
    eta = float(np.mean([row["true_eta_sq"] for row in rows]))
    target = discretization_variance(H_STAR, config.T, eta)
    summary = {
        "experiment": "discretization_clt",
        "n": n,
        "M": M,
        "scheme": scheme,
        "replications": config.replications,
        "eta_sq": eta,
        "target_variance": target,
        "empirical_variance": float(err.var(ddof=1)),
        "variance_ratio": float(err.var(ddof=1) / target),
        "mean": float(err.mean()),
    }
    return ExperimentResult("discretization_clt", rows, summary)
