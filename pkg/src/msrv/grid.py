"""Observation grids and the asymptotic quadratic variation of time (AQVT).

For a grid ``0 = t_0 < ... < t_n = T`` the finite-n AQVT is

    H_n(t) = (n / T) * sum_{i >= 1, t_i <= t} (t_i - t_{i-1})**2,

which equals ``t`` on equidistant grids. Its slope H'(t) weights the spot
quarticity in the discretization variance (see :func:`msrv.inference.eta_sq`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DomainError, InputError, ParameterError, MSRVWarning

DEFAULT_GAP_BOUND_FACTOR = 50.0


@dataclass(frozen=True, eq=False)
class SamplingGrid:
    """Strictly increasing observation times on ``[0, horizon]``.

    ``times[0]`` must be 0 and ``times[-1]`` must equal ``horizon``. A gap
    larger than ``gap_bound_factor * T / n`` only triggers a warning, since
    the O(1/n) bound on the largest gap is an asymptotic regularity condition.
    """

    times: np.ndarray
    horizon: float
    gap_bound_factor: float = DEFAULT_GAP_BOUND_FACTOR
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size < 3:
            raise InputError("a grid needs at least 3 time points (n >= 2)")
        if not np.all(np.isfinite(times)):
            raise InputError("grid times must be finite")
        horizon = float(self.horizon)
        if not horizon > 0:
            raise InputError(f"horizon must be positive, got {horizon}")
        if times[0] != 0.0:
            raise ContractError(f"grid must start at 0, got {times[0]}")
        if times[-1] != horizon:
            raise ContractError(f"grid must end at the horizon {horizon}, got {times[-1]}")
        dt = np.diff(times)
        if np.any(dt <= 0):
            bad = int(np.argmax(dt <= 0)) + 1
            raise ContractError(f"grid times must be strictly increasing (index {bad})")
        n = dt.size
        if dt.max() > self.gap_bound_factor * horizon / n:
            warnings.warn(
                f"largest gap {dt.max():.3g} exceeds {self.gap_bound_factor} x T/n",
                MSRVWarning,
                stacklevel=3,
            )
        times.flags.writeable = False
        cum = np.concatenate(([0.0], np.cumsum(dt * dt))) * (n / horizon)
        cum.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "_cum", cum)

    @property
    def n(self) -> int:
        """Number of intervals (observations minus one)."""
        return self.times.size - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.times)

    @classmethod
    def equidistant(cls, n: int, horizon: float = 1.0) -> "SamplingGrid":
        return cls(np.linspace(0.0, horizon, n + 1), horizon)

    @classmethod
    def from_timestamps(cls, timestamps, **kwargs) -> "SamplingGrid":
        """Shift raw timestamps so the first observation is at 0."""
        ts = np.asarray(timestamps, dtype=float)
        if ts.size < 3:
            raise InputError("a grid needs at least 3 time points (n >= 2)")
        shifted = ts - ts[0]
        return cls(shifted, float(shifted[-1]), **kwargs)

    def aqvt_at_grid(self) -> np.ndarray:
        """H_n evaluated at every grid time."""
        return self._cum

    def aqvt_interp(self, t) -> np.ndarray:
        """Piecewise-linear interpolant of H_n through its grid-point values."""
        return np.interp(t, self.times, self._cum)


@dataclass(frozen=True)
class AqvtCurve:
    points: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    bandwidth: float
    all_positive: bool


def empirical_aqvt(grid: SamplingGrid, t: float) -> float:
    """Finite-n AQVT: ``(n/T) * sum over t_i <= t of (t_i - t_{i-1})**2``."""
    if not 0.0 <= t <= grid.horizon:
        raise DomainError(f"t={t} outside [0, {grid.horizon}]")
    k = int(np.searchsorted(grid.times, t, side="right")) - 1
    return float(grid.aqvt_at_grid()[k])


def aqvt_derivative(
    grid: SamplingGrid,
    bandwidth: Optional[float] = None,
    points: Optional[np.ndarray] = None,
) -> AqvtCurve:
    """Estimate H'(t) by symmetric differences of the interpolated AQVT.

    The window ``[t - b, t + b]`` is clipped to ``[0, T]``. Defaults: bandwidth
    ``T / sqrt(n)``, evaluation at the grid times.
    """
    T = grid.horizon
    if grid.n < 4:
        raise InputError("need at least 4 intervals to estimate H'")
    b = T / math.sqrt(grid.n) if bandwidth is None else float(bandwidth)
    if not 0.0 < b <= T / 2:
        raise ParameterError(f"bandwidth must lie in (0, T/2], got {b}")
    pts = grid.times if points is None else np.asarray(points, dtype=float)
    if np.any(pts < 0) or np.any(pts > T):
        raise DomainError("evaluation points must lie in [0, T]")
    lo = np.maximum(pts - b, 0.0)
    hi = np.minimum(pts + b, T)
    deriv = (grid.aqvt_interp(hi) - grid.aqvt_interp(lo)) / (hi - lo)
    values = grid.aqvt_interp(pts)
    positive = bool(np.all(deriv > 0))
    if not positive:
        warnings.warn("estimated H' is not strictly positive", MSRVWarning, stacklevel=2)
    return AqvtCurve(pts, values, deriv, b, positive)


def time_change(grid: SamplingGrid, g: Callable[[np.ndarray], np.ndarray]) -> SamplingGrid:
    """Map the grid through ``g`` (g(0)=0, g(T)=T, strictly increasing)."""
    T = grid.horizon
    u = np.asarray(g(grid.times.copy()), dtype=float)
    if u.shape != grid.times.shape:
        raise ContractError("g must map the time vector elementwise")
    tol = 1e-12 * T
    if abs(u[0]) > tol or abs(u[-1] - T) > tol:
        raise ContractError("g must fix the endpoints 0 and T")
    u[0], u[-1] = 0.0, T
    if np.any(np.diff(u) <= 0):
        raise ContractError("g is not strictly increasing on the grid")
    return SamplingGrid(u, T, grid.gap_bound_factor)


def equidistance_defect(grid: SamplingGrid) -> float:
    """``sum_i (dt_i - T/n)**2``; o(1/n) exactly when the grid is asymptotically regular."""
    step = grid.horizon / grid.n
    return math.fsum((grid.increments - step) ** 2)
