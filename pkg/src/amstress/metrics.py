"""Curve error metrics, Student-t confidence intervals and mechanical properties."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import StressStrainCurve

MAPE_FLOOR = 1e-9


class MetricError(ValueError):
    pass


def _pair(actual, predicted):
    y = np.asarray(actual, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise MetricError("actual and predicted must be 1-D sequences of equal length")
    return y, yhat


def mape(actual, predicted) -> float:
    """Mean absolute percentage error; points with |y| <= 1e-9 are skipped."""
    y, yhat = _pair(actual, predicted)
    keep = np.abs(y) > MAPE_FLOOR
    if not keep.any():
        raise MetricError("every actual value is below the MAPE floor")
    y, yhat = y[keep], yhat[keep]
    return float(np.mean(np.abs(y - yhat) / y) * 100.0)


def mape_excluded(actual) -> int:
    return int(np.sum(np.abs(np.asarray(actual, dtype=float)) <= MAPE_FLOOR))


def r_squared(actual, predicted) -> float:
    y, yhat = _pair(actual, predicted)
    if len(y) < 2:
        raise MetricError("R^2 needs at least two points")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R^2 undefined for constant actual values")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


# --- Student t -------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    x = df / (df + t * t)
    tail = 0.5 * betainc(0.5 * df, 0.5, x)
    return 1.0 - tail if t >= 0 else tail


@lru_cache(maxsize=1024)
def t_critical(level: float, df: float, tol: float = 0.0) -> float:
    """Two-sided critical value: t_cdf(t*, df) = 1 - (1 - level)/2, by bisection.

    With ``tol`` = 0 the bracket is halved until it cannot shrink further.
    """
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    target = 1.0 - (1.0 - level) / 2.0
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < target:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("t critical value bracket diverged")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if t_cdf(mid, df) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def confidence_interval(values, level: float = 0.95) -> tuple[float, float]:
    """(mean, half-width) of the Student-t interval for the mean."""
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise MetricError("confidence interval needs at least two values")
    s = float(np.std(x, ddof=1))
    half = t_critical(level, n - 1) * s / math.sqrt(n)
    return float(np.mean(x)), half


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    ci_half_width: float
    n: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "ci_half_width": self.ci_half_width, "n": self.n}


def aggregate(values, level: float = 0.95) -> Aggregate:
    x = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if x.size == 0:
        return Aggregate(float("nan"), float("nan"), float("nan"), 0)
    if x.size == 1:
        return Aggregate(float(x[0]), 0.0, 0.0, 1)
    mean, half = confidence_interval(x, level)
    return Aggregate(mean, float(np.std(x, ddof=1)), half, int(x.size))


# --- mechanical properties -------------------------------------------------------------

def youngs_modulus(curve: StressStrainCurve, eps_y: float) -> float:
    """Through-origin least-squares slope over the points with strain < eps_y."""
    mask = curve.strain < eps_y
    if mask.sum() < 2:
        raise MetricError("need at least two elastic points for Young's modulus")
    e, s = curve.strain[mask], curve.stress[mask]
    return float(np.dot(s, e) / np.dot(e, e))


def ultimate_tensile_strength(curve: StressStrainCurve) -> float:
    if len(curve.stress) == 0:
        raise MetricError("empty curve")
    return float(np.max(curve.stress))


def relative_error_pct(actual: float, predicted: float) -> float:
    return abs(actual - predicted) / abs(actual) * 100.0
