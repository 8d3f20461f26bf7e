"""Realized-variance estimators: RV, lag-K averaged RV, TSRV and MSRV.

Every estimator accepts either a :class:`TickSeries` or a bare 1-D array of
log-prices; only increments are used, so timestamps never enter the point
estimates. TSRV and MSRV are returned untruncated and may be negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .errors import ContractError, InputError, ParameterError
from .grid import SamplingGrid

PROVENANCES = ("discrete-optimal", "h-family", "custom", "diagnostic")

# Exact schemes must satisfy both weight conditions to this absolute tolerance.
EXACT_TOL = 1e-10
# h-family schemes: |sum a - 1| <= C1 / M and |sum a/K| <= C2 / M**3.
H_FAMILY_COND1_CONST = 1.0
H_FAMILY_COND2_CONST = 1.0


@dataclass(frozen=True, eq=False)
class TickSeries:
    """Noisy log-prices Y observed on a sampling grid."""

    grid: SamplingGrid
    logprices: np.ndarray

    def __post_init__(self):
        y = np.array(self.logprices, dtype=float)
        if y.ndim != 1 or y.size != self.grid.times.size:
            raise InputError(
                f"expected {self.grid.times.size} log-prices, got {y.size}"
            )
        if not np.all(np.isfinite(y)):
            raise InputError("log-prices must be finite")
        y.flags.writeable = False
        object.__setattr__(self, "logprices", y)

    @property
    def n(self) -> int:
        return self.grid.n

    @classmethod
    def from_arrays(cls, timestamps, logprices, **grid_kwargs) -> "TickSeries":
        return cls(SamplingGrid.from_timestamps(timestamps, **grid_kwargs), logprices)

    @classmethod
    def equidistant(cls, logprices, horizon: float = 1.0) -> "TickSeries":
        y = np.asarray(logprices, dtype=float)
        return cls(SamplingGrid.equidistant(y.size - 1, horizon), y)


@dataclass(frozen=True, eq=False)
class WeightScheme:
    """Scales ``K_1 < ... < K_M`` with weights ``a_1..a_M``.

    The conditions ``sum a = 1`` and ``sum a/K = 0`` are checked on
    construction; how strictly depends on ``provenance``:

    * ``discrete-optimal`` / ``custom``: both to 1e-10.
    * ``h-family``: ``|sum a - 1| <= C1/M`` and ``|sum a/K| <= C2/M**3``.
    * ``diagnostic``: unchecked; usable by :func:`msrv` only with
      ``diagnostic=True``.
    """

    scales: np.ndarray
    weights: np.ndarray
    provenance: str = "custom"

    def __post_init__(self):
        k = np.array(self.scales)
        a = np.array(self.weights, dtype=float)
        if self.provenance not in PROVENANCES:
            raise ParameterError(f"unknown provenance {self.provenance!r}")
        if k.ndim != 1 or a.shape != k.shape or k.size == 0:
            raise ContractError("scales and weights must be 1-D and of equal length")
        if not np.all(np.equal(np.mod(k, 1), 0)) or np.any(k < 1):
            raise ContractError("scales must be positive integers")
        k = k.astype(np.int64)
        if np.any(np.diff(k) <= 0):
            raise ContractError("scales must be strictly increasing")
        if not np.all(np.isfinite(a)):
            raise ContractError("weights must be finite")
        k.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "scales", k)
        object.__setattr__(self, "weights", a)

        if self.provenance == "diagnostic":
            return
        m = k.size
        if m < 2:
            raise ContractError("Condition sum(a/K) = 0 needs at least two scales")
        if self.provenance == "h-family":
            tol1 = H_FAMILY_COND1_CONST / m
            tol2 = H_FAMILY_COND2_CONST / m**3
        else:
            tol1 = tol2 = EXACT_TOL
        if abs(self.cond1_residual) > tol1:
            raise ContractError(f"sum of weights differs from 1 by {self.cond1_residual:.3g}")
        if abs(self.cond2_residual) > tol2:
            raise ContractError(f"sum of a/K is {self.cond2_residual:.3g}, not 0")

    @property
    def M(self) -> int:
        return self.scales.size

    @property
    def cond1_residual(self) -> float:
        """``sum a_i - 1``."""
        return math.fsum(self.weights) - 1.0

    @property
    def cond2_residual(self) -> float:
        """``sum a_i / K_i``."""
        return math.fsum(self.weights / self.scales)

    def to_dict(self) -> dict:
        return {
            "scales": [int(v) for v in self.scales],
            "weights": [float(v) for v in self.weights],
            "provenance": self.provenance,
            "residuals": {"cond1": self.cond1_residual, "cond2": self.cond2_residual},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "WeightScheme":
        return cls(doc["scales"], doc["weights"], doc.get("provenance", "custom"))


SeriesLike = Union[TickSeries, np.ndarray, list, tuple]


def _logprices(series: SeriesLike) -> np.ndarray:
    if isinstance(series, TickSeries):
        return series.logprices
    y = np.ascontiguousarray(series, dtype=float)
    if y.ndim != 1:
        raise InputError("log-prices must be one-dimensional")
    if y.size < 2:
        raise InputError("need at least 2 observations")
    if not np.all(np.isfinite(y)):
        raise InputError("log-prices must be finite")
    return y


def lag_rvs(series: SeriesLike, scales) -> np.ndarray:
    """Vector of ``[Y, Y]^(n, K)`` for each ``K`` in ``scales``."""
    y = _logprices(series)
    k = np.asarray(scales, dtype=np.int64)
    n = y.size - 1
    if np.any(k < 1):
        raise ParameterError("scales must be positive")
    if np.any(k > n):
        raise InputError(f"scale {int(k.max())} exceeds n={n}")
    return _kernels.lag_sq_sums(y, k) / k


def rv(series: SeriesLike) -> float:
    """Realized variance: sum of squared one-step increments."""
    return float(lag_rvs(series, [1])[0])


def avg_lag_rv(series: SeriesLike, K: int) -> float:
    """``(1/K) * sum_{i>=K} (Y_i - Y_{i-K})**2``."""
    return float(lag_rvs(series, [int(K)])[0])


def tsrv(series: SeriesLike, K: int) -> float:
    """Two-scale realized variance ``[Y,Y]^(K) - (n-K+1)/(nK) [Y,Y]^(1)``.

    The coefficient matches ``E [Y,Y]^(K) = 2 (n-K+1)/K E eps^2 + O(1)``
    against ``E [Y,Y]^(1) = 2 n E eps^2 + O(1)``, so the noise bias cancels.
    """
    y = _logprices(series)
    n = y.size - 1
    if K < 2:
        raise ParameterError("TSRV needs K >= 2")
    if K > n:
        raise InputError(f"K={K} exceeds n={n}")
    fast, slow = lag_rvs(y, [1, K])
    return float(slow - (n - K + 1) / (n * K) * fast)


def msrv(series: SeriesLike, scheme: WeightScheme, diagnostic: bool = False) -> float:
    """Multi-scale realized variance ``sum_i a_i [Y, Y]^(n, K_i)``.

    No ``2 E eps^2`` correction is applied; the weight condition
    ``sum a/K = 0`` cancels the noise-energy term exactly.
    """
    if scheme.provenance == "diagnostic" and not diagnostic:
        raise ContractError("diagnostic schemes require diagnostic=True")
    parts = scheme.weights * lag_rvs(series, scheme.scales)
    return math.fsum(parts)
