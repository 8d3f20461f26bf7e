"""Noise moments, asymptotic variances, choice of M and confidence intervals.

With ``M = c sqrt(n)`` the estimator satisfies
``n^(1/4) (MSRV - <X,X>) -> nu_h Z`` where

    nu_h^2 = 4 c^-3 (E eps^2)^2 int h^2
           + c (4/3) T eta^2 int_0^1 dx int_0^x h(y) h(x) y^2 (3x - y) dy
           + 4 c^-1 Var(eps^2) int_0^1 int_0^y x h(x) h(y) dx dy
           + 8 c^-1 E eps^2 <X,X> int int h(x) h(y) min(x, y) dx dy

and ``eta^2 = int_0^T H'(t) sigma_t^4 dt``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from statistics import NormalDist
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .errors import DomainError, InputError, MSRVWarning, ParameterError
from .estimators import TickSeries, WeightScheme, msrv, rv, tsrv
from .grid import SamplingGrid, aqvt_derivative
from .weights import (
    DEFAULT_NODES,
    H_STAR,
    HSpec,
    approxweight_scheme,
    gamma_sq,
    h_family_weights,
    quadrature,
    triangle_quadrature,
)

SCHEMA_VERSION = "1.0"
C_MIN, C_MAX = 0.1, 10.0


@dataclass(frozen=True)
class NoiseMoments:
    e2: float
    e4: float
    var_e2: float
    provenance: str = "supplied"
    clamped: bool = False

    @classmethod
    def gaussian(cls, scale: float) -> "NoiseMoments":
        s2 = scale * scale
        return cls(s2, 3.0 * s2 * s2, 2.0 * s2 * s2)


def estimate_noise_moments(series: TickSeries) -> NoiseMoments:
    """Plug-ins from ``E dY^2 ~ 2 E eps^2`` and ``E dY^4 ~ 2 E eps^4 + 6 (E eps^2)^2``."""
    y = series.logprices if isinstance(series, TickSeries) else np.asarray(series, dtype=float)
    n = y.size - 1
    if n < 10:
        raise InputError("need at least 10 increments to estimate noise moments")
    d = np.diff(y)
    e2 = rv(y) / (2 * n)
    m4 = _kernels.compensated_sum(d**4) / n
    raw_e4 = (m4 - 6.0 * e2 * e2) / 2.0
    e4 = max(0.0, raw_e4)
    raw_var = e4 - e2 * e2
    var_e2 = max(0.0, raw_var)
    clamped = raw_e4 < 0 or raw_var < 0
    if clamped:
        warnings.warn("noise fourth-moment plug-in clamped at 0", MSRVWarning, stacklevel=2)
    return NoiseMoments(e2, e4, var_e2, "estimated", clamped)


def noise_term_variance(scheme: WeightScheme, n: int, e2: float) -> float:
    """``gamma^2 n (E eps^2)^2``, the variance of the pure-noise error."""
    return gamma_sq(scheme) * n * e2 * e2


SpotVar = Union[float, Callable[[np.ndarray], np.ndarray]]


def eta_sq(grid: SamplingGrid, spot_var: SpotVar, bandwidth: Optional[float] = None) -> float:
    """``int_0^T H'(t) sigma_t^4 dt`` with H' estimated from the grid.

    Trapezoidal rule over the grid times; ``spot_var`` is sigma_t^2, either a
    constant or a vectorised function of time.
    """
    curve = aqvt_derivative(grid, bandwidth)
    t = curve.points
    if callable(spot_var):
        s2 = np.asarray(spot_var(t), dtype=float)
    else:
        s2 = np.full(t.shape, float(spot_var))
    if np.any(s2 < 0):
        raise DomainError("spot variance must be nonnegative")
    f = curve.derivative * s2 * s2
    return _kernels.compensated_sum(0.5 * (f[1:] + f[:-1]) * np.diff(t))


@dataclass(frozen=True)
class HIntegrals:
    h_sq: float  # int h^2
    discretization: float  # int_0^1 dx int_0^x h(y)h(x) y^2 (3x - y) dy
    remainder: float  # int_0^1 int_0^y x h(x) h(y) dx dy
    cross: float  # int int h(x) h(y) min(x, y) dx dy


@lru_cache(maxsize=32)
def h_integrals(h: HSpec = H_STAR, nodes: int = DEFAULT_NODES) -> HIntegrals:
    f = h.h
    h_sq = quadrature(lambda x: f(x) ** 2, 0.0, 1.0, nodes)
    disc = triangle_quadrature(lambda x, y: f(y) * f(x) * y**2 * (3 * x - y), nodes)
    # outer variable plays the role of y, inner of x
    rem = triangle_quadrature(lambda x, y: y * f(y) * f(x), nodes)
    # min(x, y) is symmetric: twice the integral over the lower triangle
    cross = 2.0 * triangle_quadrature(lambda x, y: f(x) * f(y) * np.minimum(x, y), nodes)
    return HIntegrals(h_sq, disc, rem, cross)


def discretization_variance(h: HSpec, T: float, eta_sq: float) -> float:
    """Asymptotic variance of ``(n/M)^(1/2) (sum a_i [X,X]^(i) - <X,X>)``."""
    return 4.0 / 3.0 * T * eta_sq * h_integrals(h).discretization


@dataclass(frozen=True)
class VarianceReport:
    noise_term: float
    discretization_term: float
    remainder_term: float
    cross_term: float
    nu_sq: float
    c_used: float
    eta_sq: float
    qv_plugin: float
    provenance: dict = field(default_factory=dict)

    @property
    def remainder_cross_terms(self) -> float:
        return self.remainder_term + self.cross_term

    def to_dict(self) -> dict:
        d = asdict(self)
        d["remainder_cross_terms"] = self.remainder_cross_terms
        return d


def variance_coefficients(h, moments, T, eta_sq, qv):
    """``(A, B, C)`` such that ``nu_h^2(c) = A/c^3 + B c + C/c``."""
    I = h_integrals(h)
    A = 4.0 * moments.e2**2 * I.h_sq
    B = 4.0 / 3.0 * T * eta_sq * I.discretization
    C = 4.0 * moments.var_e2 * I.remainder + 8.0 * moments.e2 * qv * I.cross
    return A, B, C


def total_asymptotic_variance(
    h: HSpec,
    c: float,
    moments: NoiseMoments,
    T: float,
    eta_sq: float,
    qv: float,
    provenance: Optional[dict] = None,
) -> VarianceReport:
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    I = h_integrals(h)
    noise = 4.0 * moments.e2**2 * I.h_sq / c**3
    disc = c * 4.0 / 3.0 * T * eta_sq * I.discretization
    rem = 4.0 * moments.var_e2 * I.remainder / c
    cross = 8.0 * moments.e2 * qv * I.cross / c
    return VarianceReport(
        noise, disc, rem, cross, math.fsum([noise, disc, rem, cross]), c, eta_sq, qv,
        dict(provenance or {}),
    )


def hstar_variance(c: float, e2: float, var_e2: float, T: float, eta_sq: float, qv: float) -> float:
    """Closed form of ``nu_h^2`` for ``h(x) = 12 (x - 1/2)``."""
    return (
        48.0 * e2**2 / c**3
        + 52.0 / 35.0 * c * T * eta_sq
        + 12.0 / 5.0 * var_e2 / c
        + 48.0 / 5.0 * e2 * qv / c
    )


def plug_in_c(A: float, B: float, C: float) -> float:
    """Minimiser of ``A/c^3 + B c + C/c`` over ``c > 0``."""
    if not B > 0:
        raise ParameterError("B must be positive for an interior minimum")
    if not A > 0:
        raise ParameterError("A must be positive for an interior minimum")
    if C < 0:
        raise ParameterError("C must be nonnegative")
    return math.sqrt((C + math.sqrt(C * C + 12.0 * A * B)) / (2.0 * B))


def confidence_interval(estimate: float, nu_sq: float, n: int, level: float = 0.95):
    """``estimate +/- z * nu * n^(-1/4)``."""
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    if not nu_sq > 0:
        raise ParameterError("nu_sq must be positive")
    z = NormalDist().inv_cdf(0.5 + 0.5 * level)
    half = z * math.sqrt(nu_sq) * n**-0.25
    return estimate - half, estimate + half


def discretization_cov_matrix(kappas, T: float) -> np.ndarray:
    """Limit covariance of ``(n/M)^(1/2) ([X,X]^(K_I) - <X,X>)`` divided by eta^2."""
    k = np.asarray(kappas, dtype=float)
    if k.ndim != 1 or k.size == 0 or np.any(k <= 0):
        raise InputError("kappas must be positive")
    lo = np.minimum.outer(k, k)
    hi = np.maximum.outer(k, k)
    return 2.0 / 3.0 * T * lo * (3.0 - lo / hi)


# ---------------------------------------------------------------------------
# M selection and end-to-end estimation


def max_scales(n: int) -> int:
    """Largest admissible M: below n/2, but never less than 2."""
    return max(2, math.ceil(n / 2) - 1)


def parse_m_policy(policy: str):
    """``plugin`` | ``sqrt`` | ``fixed:<M>`` | ``c:<c>`` -> (kind, value)."""
    if policy in ("plugin", "sqrt"):
        return policy, None
    kind, _, value = policy.partition(":")
    try:
        if kind == "fixed":
            m = int(value)
            if m < 2:
                raise ParameterError("fixed M must be at least 2")
            return kind, m
        if kind == "c":
            c = float(value)
            if not c > 0:
                raise ParameterError("c must be positive")
            return kind, c
    except ValueError as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"bad m-policy {policy!r}") from exc
    raise ParameterError(f"bad m-policy {policy!r}")


def choose_m(n: int, policy: str = "sqrt", coefficients=None):
    """Number of scales for a series of ``n`` increments.

    Returns ``(M, c_target, clamped)`` where ``c_target`` is the constant the
    policy asked for (before rounding M) and ``clamped`` says whether a bound
    was applied.
    """
    kind, value = parse_m_policy(policy)
    root = math.sqrt(n)
    clamped = False
    if kind == "sqrt":
        m = math.ceil(root)
        c = m / root
    elif kind == "fixed":
        m = value
        c = m / root
    else:
        if kind == "c":
            c = value
        elif coefficients is None:
            raise ParameterError("plugin policy needs variance coefficients")
        else:
            A, B, C = coefficients
            if B <= 0:
                # no discretization term: the variance decreases in c
                c = C_MAX
            elif A <= 0:
                c = math.sqrt(C / B) if C > 0 else C_MIN
            else:
                c = plug_in_c(A, B, C)
            if not C_MIN <= c <= C_MAX:
                c = min(max(c, C_MIN), C_MAX)
                clamped = True
        m = max(2, round(c * root))
    cap = max_scales(n)
    if m > cap:
        m = cap
        clamped = True
    return int(m), c, clamped


def build_scheme(kind: str, M: int, h: HSpec = H_STAR) -> WeightScheme:
    if kind == "optimal":
        return approxweight_scheme(M)
    if kind == "hstar":
        return h_family_weights(h, M)
    raise ParameterError(f"unknown scheme kind {kind!r}")


def constant_vol_eta_sq(grid: SamplingGrid, qv: float) -> float:
    """``(qv/T)^2 int H'`` = ``(qv/T)^2 H_n(T)``: eta^2 if volatility were constant."""
    return (qv / grid.horizon) ** 2 * float(grid.aqvt_at_grid()[-1])


@dataclass
class EstimateReport:
    n: int
    horizon: float
    rv: float
    tsrv: float
    tsrv_k: int
    msrv: float
    M: int
    scheme: str
    m_policy: str
    c_used: float
    c_target: Optional[float]
    noise_moments: Optional[NoiseMoments]
    variance: Optional[VarianceReport]
    level: float
    interval: Optional[tuple]
    flags: dict

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "horizon": self.horizon,
            "estimates": {
                "rv": self.rv,
                "tsrv": self.tsrv,
                "tsrv_k": self.tsrv_k,
                "msrv": self.msrv,
            },
            "msrv_config": {
                "M": self.M,
                "scheme": self.scheme,
                "m_policy": self.m_policy,
                "c_used": self.c_used,
                "c_target": self.c_target,
            },
            "noise_moments": asdict(self.noise_moments) if self.noise_moments else None,
            "variance": self.variance.to_dict() if self.variance else None,
            "confidence_interval": None,
            "flags": dict(self.flags),
        }
        if self.interval is not None:
            lo, hi = self.interval
            out["confidence_interval"] = {
                "level": self.level,
                "lower": lo,
                "upper": hi,
                "half_width": 0.5 * (hi - lo),
            }
        return out


def estimate(
    series: TickSeries,
    level: float = 0.95,
    m_policy: str = "plugin",
    scheme: str = "optimal",
    tsrv_k: Optional[int] = None,
    bias_correct: bool = False,
    h: HSpec = H_STAR,
) -> EstimateReport:
    """RV, TSRV and MSRV with a plug-in confidence interval for the MSRV.

    ``bias_correct`` adds ``2 * E eps^2`` (estimated) to the MSRV: with weights
    in the ``sum a/K = 0`` parameterisation the statistic is centred at
    ``<X,X> - 2 E eps^2`` in finite samples.
    """
    if not 0.0 < level < 1.0:
        raise ParameterError(f"level must lie in (0, 1), got {level}")
    n, T = series.n, series.grid.horizon
    flags = {
        "negative_msrv": False,
        "negative_tsrv": False,
        "var_e2_clamped": False,
        "qv_plugin_clamped": False,
        "c_clamped": False,
        "bias_corrected": bias_correct,
        "inference_skipped": False,
    }
    rv_value = rv(series)
    k = tsrv_k if tsrv_k is not None else min(n, max(2, math.ceil(n ** (2.0 / 3.0))))
    tsrv_value = tsrv(series, k)

    try:
        moments = estimate_noise_moments(series)
    except InputError:
        moments = None
        flags["inference_skipped"] = True
    if moments is not None:
        flags["var_e2_clamped"] = moments.clamped

    kind, _ = parse_m_policy(m_policy)
    coefficients = None
    if kind == "plugin" and moments is not None:
        m0, _, _ = choose_m(n, "sqrt")
        pilot = msrv(series, build_scheme(scheme, m0, h))
        qv0 = max(pilot, 0.0)
        eta0 = constant_vol_eta_sq(series.grid, qv0)
        coefficients = variance_coefficients(h, moments, T, eta0, qv0)
    policy = m_policy if (kind != "plugin" or coefficients is not None) else "sqrt"
    M, c_target, clamped = choose_m(n, policy, coefficients)
    flags["c_clamped"] = clamped
    sch = build_scheme(scheme, M, h)
    value = msrv(series, sch)
    if bias_correct and moments is not None:
        value += 2.0 * moments.e2
    flags["negative_msrv"] = value < 0
    flags["negative_tsrv"] = tsrv_value < 0
    c_used = M / math.sqrt(n)

    variance = interval = None
    if moments is not None:
        qv = value
        if qv < 0:
            qv = 0.0
            flags["qv_plugin_clamped"] = True
        eta = constant_vol_eta_sq(series.grid, qv)
        prov = {
            "noise_moments": "clamped" if moments.clamped else "estimated",
            "eta_sq": "estimated",
            "qv_plugin": "clamped" if flags["qv_plugin_clamped"] else "estimated",
            "c_used": "estimated" if kind == "plugin" else "supplied",
        }
        variance = total_asymptotic_variance(h, c_used, moments, T, eta, qv, prov)
        if variance.nu_sq > 0:
            interval = confidence_interval(value, variance.nu_sq, n, level)
        else:
            flags["inference_skipped"] = True

    return EstimateReport(
        n, T, rv_value, tsrv_value, k, value, M, scheme,
        m_policy, c_used, c_target, moments, variance, level, interval, flags,
    )
