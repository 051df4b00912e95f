"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

One step with sampling rate ``q`` and noise multiplier ``sigma`` is bounded at
integer order ``alpha`` by

    eps_alpha = log( sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 sigma^2)) ) / (alpha-1)

(exactly ``alpha / (2 sigma^2)`` when ``q == 1``). Steps compose additively and
the curve converts to ``(eps, delta)`` via ``min_alpha eps_alpha + log(1/delta)/(alpha-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import CalibrationError, ConfigError, StateError

DEFAULT_ORDERS = tuple(range(2, 65)) + (128, 256)
DEFAULT_DELTA = 6e-6
SIGMA_LOW = 0.3
SIGMA_HIGH = 500.0
EPS_TOLERANCE = 1e-3


@dataclass(frozen=True, eq=False)
class RdpCurve:
    orders: tuple
    values: np.ndarray
    steps_composed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(self.orders))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if len(self.orders) != self.values.shape[0]:
            raise ConfigError("orders and values differ in length")


def _check_orders(orders):
    orders = tuple(orders)
    if any(not a > 1 for a in orders):
        raise ConfigError("Renyi orders must exceed 1")
    if list(orders) != sorted(orders):
        raise ConfigError("Renyi orders must be ascending")
    return orders


def _log_binomial_moment(q: float, sigma: float, alpha: int) -> float:
    k = np.arange(alpha + 1, dtype=np.float64)
    log_coef = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    terms = log_coef + k * math.log(q) + (alpha - k) * math.log1p(-q) + k * (k - 1) / (2.0 * sigma ** 2)
    return float(logsumexp(terms))


def rdp_subsampled_gaussian(q: float, sigma: float, orders: Sequence[float] = DEFAULT_ORDERS) -> RdpCurve:
    """Per-step RDP curve of the subsampled Gaussian mechanism."""
    if not (0.0 < q <= 1.0):
        raise ConfigError(f"sample rate must lie in (0, 1], got {q}")
    if not sigma > 0:
        raise ConfigError(f"noise multiplier must be > 0, got {sigma}")
    orders = _check_orders(orders)
    if q == 1.0:
        values = np.array([a / (2.0 * sigma ** 2) for a in orders])
    else:
        values = np.empty(len(orders))
        for i, a in enumerate(orders):
            if a != int(a):
                raise ConfigError("the subsampled bound is only implemented at integer orders")
            values[i] = _log_binomial_moment(q, sigma, int(a)) / (a - 1)
        # the log-sum can round a hair below zero when q is tiny
        values = np.maximum(values, 0.0)
    return RdpCurve(orders, values, 1)


def compose(curve: RdpCurve, steps: int) -> RdpCurve:
    if steps < 0:
        raise ConfigError("step count must be >= 0")
    return RdpCurve(curve.orders, curve.values * steps, curve.steps_composed * steps)


def rdp_to_eps(curve: RdpCurve, delta: float):
    """Return ``(eps, best_order)``; ties go to the smaller order."""
    if not (0.0 < delta < 1.0):
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if len(curve.orders) == 0:
        raise StateError("empty RDP curve")
    orders = np.asarray(curve.orders, dtype=np.float64)
    eps = curve.values + math.log(1.0 / delta) / (orders - 1.0)
    i = int(np.argmin(eps))
    return float(eps[i]), curve.orders[i]


def epsilon(q: float, sigma: float, steps: int, delta: float, orders=DEFAULT_ORDERS) -> float:
    """Total epsilon after ``steps`` steps; 0 when nothing ran."""
    if steps == 0:
        return 0.0
    return rdp_to_eps(compose(rdp_subsampled_gaussian(q, sigma, orders), steps), delta)[0]


def calibrate_sigma(eps_target: float, delta: float, q: float, steps: int,
                    orders=DEFAULT_ORDERS, sigma_low: float = SIGMA_LOW,
                    sigma_high: float = SIGMA_HIGH, tol: float = EPS_TOLERANCE,
                    max_iter: int = 200) -> float:
    """Bisect for a sigma whose epsilon lies in ``[target - tol, target]``.

    Relies on epsilon being strictly decreasing in sigma. The upper bracket
    doubles until it undershoots the target. A target above the epsilon of the
    lower bracket raises :class:`CalibrationError` rather than clamping.
    """
    if not eps_target > 0 or math.isinf(eps_target):
        raise ConfigError("calibration needs a finite positive epsilon target")
    if steps < 1:
        raise ConfigError("calibration needs at least one step")

    def eps_of(s):
        return epsilon(q, s, steps, delta, orders)

    lo, hi = sigma_low, sigma_high
    e_lo = eps_of(lo)
    if e_lo < eps_target - tol:
        raise CalibrationError(
            f"target eps={eps_target} unreachable: sigma={lo} already gives eps={e_lo:.6g}",
            bracket=(lo, hi))
    if e_lo <= eps_target:
        return lo
    while eps_of(hi) > eps_target:
        lo, hi = hi, hi * 2.0
        if hi > 1e7:
            raise CalibrationError(f"target eps={eps_target} not reached below sigma={hi}",
                                   bracket=(lo, hi))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = eps_of(mid)
        if e > eps_target:
            lo = mid
        elif e < eps_target - tol:
            hi = mid
        else:
            return mid
    e_hi = eps_of(hi)
    if eps_target - tol <= e_hi <= eps_target:
        return hi
    raise CalibrationError(f"bisection did not converge for eps={eps_target}", bracket=(lo, hi))
