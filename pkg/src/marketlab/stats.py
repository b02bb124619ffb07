"""Self-contained inference numerics: Student-t tails, one-sample t, simple OLS.

The t tail probability comes from the regularized incomplete beta function,
evaluated with the standard continued-fraction expansion (modified Lentz).
Nothing here imports beyond the standard library; scientific packages appear
only in the test suite as independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean
from typing import Sequence

_MAX_ITER = 300
_EPS = 3e-16
_FPMIN = 1e-300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + numerator / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + numerator / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # The continued fraction converges fast only on one side of the mean;
    # use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: int) -> float:
    """P(|T_df| >= |t|) via I_{df/(df+t^2)}(df/2, 1/2)."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isnan(t):
        raise ValueError("t is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    df: int
    mean: float


@dataclass(frozen=True)
class OLSResult:
    intercept: float
    slope: float
    se_slope: float
    t_statistic: float
    p_value: float
    df: int
    n: int


def one_sample_t(values: Sequence[float], mu: float = 0.0) -> TTestResult:
    """Two-sided test of mean == mu."""
    n = len(values)
    if n < 2:
        raise ValueError("need at least 2 observations")
    mean = fmean(values)
    variance = sum((v - mean) ** 2 for v in values) / (n - 1)
    if variance == 0.0:
        if mean == mu:
            return TTestResult(0.0, 1.0, n - 1, mean)
        statistic = math.inf if mean > mu else -math.inf
        return TTestResult(statistic, 0.0, n - 1, mean)
    statistic = (mean - mu) / math.sqrt(variance / n)
    return TTestResult(statistic, student_t_two_sided_p(statistic, n - 1),
                       n - 1, mean)


def ols_slope_test(x: Sequence[float], y: Sequence[float]) -> OLSResult:
    """y = intercept + slope*x; two-sided test of slope == 0 at df = n-2."""
    n = len(x)
    if n != len(y):
        raise ValueError("x and y must have equal length")
    if n < 3:
        raise ValueError("need at least 3 points for a slope test")
    x_mean = fmean(x)
    y_mean = fmean(y)
    sxx = sum((v - x_mean) ** 2 for v in x)
    if sxx == 0.0:
        raise ValueError("constant regressor")
    sxy = sum((a - x_mean) * (b - y_mean) for a, b in zip(x, y))
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    residual_ss = sum((b - intercept - slope * a) ** 2 for a, b in zip(x, y))
    df = n - 2
    se_slope = math.sqrt(residual_ss / df / sxx)
    if se_slope == 0.0:
        if slope == 0.0:
            return OLSResult(intercept, slope, 0.0, 0.0, 1.0, df, n)
        statistic = math.inf if slope > 0 else -math.inf
        return OLSResult(intercept, slope, 0.0, statistic, 0.0, df, n)
    statistic = slope / se_slope
    return OLSResult(intercept, slope, se_slope, statistic,
                     student_t_two_sided_p(statistic, df), df, n)
