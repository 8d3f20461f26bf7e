"""Weight schemes for the multi-scale estimator, and the quadrature they rely on.

Two constructions are provided:

* the noise-optimal discrete weights for an arbitrary set of scales,
  ``a_i = K_i (K_i - Kbar) / (M Var(K))``, which minimise
  ``gamma^2 = 4 sum (a_i/K_i)^2`` subject to ``sum a = 1`` and ``sum a/K = 0``;
* the smooth family on scales ``K_i = i``,
  ``a_i = (1/M) w_M(i/M)`` with
  ``w_M(x) = x h(x) + x h1(x)/M + x h2/M^2 + x h3/M^3`` and the correction terms
  ``h1 = -h'/2``, ``h2 = (h'(1) - h'(0))/6``, ``h3 = (h''(1) - h''(0))/24``.
  These corrections make ``sum a/K`` vanish to order ``M**-5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericError, ParameterError, SingularityError
from .estimators import WeightScheme

DEFAULT_NODES = 128
_PANEL_ORDER = 16
H_CONDITION_TOL = 1e-8


@dataclass(frozen=True)
class HSpec:
    """A weight-generating function on [0, 1] with analytic derivatives.

    All three callables must accept numpy arrays.
    """

    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray]
    d2h: Callable[[np.ndarray], np.ndarray]
    name: str = "h"

    def h2_const(self) -> float:
        return float(self.dh(np.array(1.0)) - self.dh(np.array(0.0))) / 6.0

    def h3_const(self) -> float:
        return float(self.d2h(np.array(1.0)) - self.d2h(np.array(0.0))) / 24.0


H_STAR = HSpec(
    h=lambda x: 12.0 * (np.asarray(x, dtype=float) - 0.5),
    dh=lambda x: np.full(np.shape(x), 12.0),
    d2h=lambda x: np.zeros(np.shape(x)),
    name="h*",
)


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre_rule(a: float, b: float, nodes: int = DEFAULT_NODES):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``.

    ``nodes`` points in total, split into panels of at most 16 points each.
    """
    if nodes < 1:
        raise ParameterError("nodes must be positive")
    if not a < b:
        raise ParameterError(f"need a < b, got [{a}, {b}]")
    order = min(nodes, _PANEL_ORDER)
    panels = math.ceil(nodes / order)
    x0, w0 = _gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    x = (mid[:, None] + half[:, None] * x0[None, :]).ravel()
    w = (half[:, None] * w0[None, :]).ravel()
    return x, w


def quadrature(f, a: float, b: float, nodes: int = DEFAULT_NODES) -> float:
    """Integrate a vectorised ``f`` over ``[a, b]``."""
    x, w = gauss_legendre_rule(a, b, nodes)
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise NumericError("integrand is not finite on the quadrature nodes")
    return math.fsum(w * np.broadcast_to(fx, x.shape))


def triangle_quadrature(f, nodes: int = DEFAULT_NODES) -> float:
    """``int_0^1 dx int_0^x f(x, y) dy`` via the substitution ``y = x s``."""
    x, w = gauss_legendre_rule(0.0, 1.0, nodes)
    X = x[:, None]
    Y = x[:, None] * x[None, :]
    fx = np.asarray(f(X, Y), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise NumericError("integrand is not finite on the quadrature nodes")
    return math.fsum((w[:, None] * w[None, :] * X * fx).ravel())


@dataclass(frozen=True)
class HConditionReport:
    """Residuals of the moment conditions on h and the correction-term identities."""

    cond3: float  # int x h(x) dx - 1
    cond4: float  # int h(x) dx
    extracond: tuple
    tol: float = H_CONDITION_TOL
    failed: tuple = field(default=())

    @property
    def ok(self) -> bool:
        return not self.failed


def check_h_conditions(h: HSpec, quadrature_nodes: int = DEFAULT_NODES) -> HConditionReport:
    """Evaluate ``int x h = 1``, ``int h = 0`` and the three identities
    linking ``h1, h2, h3`` to ``h`` under the canonical correction terms."""
    if quadrature_nodes < 64:
        raise ParameterError("use at least 64 quadrature nodes")
    one, zero = np.array(1.0), np.array(0.0)
    cond3 = quadrature(lambda x: x * h.h(x), 0.0, 1.0, quadrature_nodes) - 1.0
    cond4 = quadrature(h.h, 0.0, 1.0, quadrature_nodes)

    def h1(x):
        return -0.5 * h.dh(x)

    def dh1(x):
        return -0.5 * h.d2h(x)

    dh_edge = float(h.dh(one) - h.dh(zero))
    e1 = quadrature(h1, 0.0, 1.0, quadrature_nodes) + 0.5 * float(h.h(one) - h.h(zero))
    e2 = h.h2_const() + 0.5 * float(h1(one) - h1(zero)) + dh_edge / 12.0
    e3 = h.h3_const() + float(dh1(one) - dh1(zero)) / 12.0
    residuals = {"cond3": cond3, "cond4": cond4, "extracond1": e1, "extracond2": e2, "extracond3": e3}
    failed = tuple(k for k, v in residuals.items() if abs(v) > H_CONDITION_TOL)
    return HConditionReport(cond3, cond4, (e1, e2, e3), H_CONDITION_TOL, failed)


def optimal_discrete_weights(scales: Sequence[int], M: int | None = None) -> WeightScheme:
    """Noise-optimal weights ``K_i (K_i - Kbar) / (M Var(K))`` for the given scales."""
    k = np.asarray(scales, dtype=float)
    m = k.size
    if M is not None and M != m:
        raise ParameterError(f"M={M} does not match {m} scales")
    if m < 2:
        raise ParameterError("need at least two scales")
    kbar = k.mean()
    var_k = np.mean((k - kbar) ** 2)
    if var_k == 0.0:
        raise SingularityError("scales have zero variance")
    a = k * (k - kbar) / (m * var_k)
    return WeightScheme(k.astype(np.int64), a, "discrete-optimal")


def approxweight_scheme(M: int) -> WeightScheme:
    """Closed form of the noise-optimal weights for scales ``1..M``."""
    if M < 2:
        raise ParameterError("M must be at least 2")
    i = np.arange(1, M + 1, dtype=float)
    a = 12.0 * (i / M**2) * (i / M - 0.5 - 0.5 / M) / (1.0 - 1.0 / M**2)
    return WeightScheme(np.arange(1, M + 1), a, "discrete-optimal")


def h_family_weights(h: HSpec, M: int) -> WeightScheme:
    """Weights ``a_i = (1/M) w_M(i/M)`` on scales ``1..M``; not renormalised."""
    if M < 2:
        raise ParameterError("M must be at least 2")
    report = check_h_conditions(h)
    if abs(report.cond3) > report.tol or abs(report.cond4) > report.tol:
        raise ContractError(f"h fails its moment conditions: {report.failed}")
    i = np.arange(1, M + 1, dtype=float)
    x = i / M
    a = (
        i / M**2 * h.h(x)
        - 0.5 * i / M**3 * h.dh(x)
        + i / M**4 * h.h2_const()
        + i / M**5 * h.h3_const()
    )
    return WeightScheme(np.arange(1, M + 1), a, "h-family")


def gamma_sq(scheme: WeightScheme) -> float:
    """Noise-variance factor ``4 sum (a_i / K_i)**2``."""
    return 4.0 * math.fsum((scheme.weights / scheme.scales) ** 2)


def lindeberg_ratio(scheme: WeightScheme) -> float:
    """``max_i |a_i / (K_i gamma)|``; must be small for the noise CLT to apply."""
    g = math.sqrt(gamma_sq(scheme))
    return float(np.max(np.abs(scheme.weights / scheme.scales)) / g)


def scheme_document(scheme: WeightScheme) -> dict:
    doc = scheme.to_dict()
    doc["gamma_sq"] = gamma_sq(scheme)
    doc["M"] = scheme.M
    return doc
