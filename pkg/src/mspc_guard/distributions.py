"""Quantiles of the F and chi-square distributions.

Regularized incomplete beta (Lentz continued fraction) and incomplete gamma
(series / continued fraction), inverted by bisection. Accuracy is ~1e-10 in
the probability, which is far tighter than control limits need.
"""

import math

from .errors import InputFault, NumericalFault

_TINY = 1e-300
_EPS = 1e-15
_MAX_ITER = 500


def _beta_cf(a, b, x):
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NumericalFault(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise InputFault("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def gammainc(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0:
        raise InputFault("gamma shape must be positive")
    if x <= 0.0:
        return 0.0
    log_front = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(_MAX_ITER * 10):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                return total * math.exp(log_front)
        raise NumericalFault(f"incomplete gamma series did not converge (a={a}, x={x})")
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER * 10):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = _TINY if abs(d) < _TINY else d
        c = b + an / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return 1.0 - math.exp(log_front) * h
    raise NumericalFault(f"incomplete gamma fraction did not converge (a={a}, x={x})")


def _bisect(cdf, p, lo, hi, tol=1e-13):
    # expand upward until the bracket holds p
    while cdf(hi) < p:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            raise NumericalFault("quantile bracket overflow")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _check_p(p):
    if not 0.0 < p < 1.0:
        raise InputFault(f"probability must lie in (0, 1), got {p}")


def chi2_ppf(p, df):
    """Inverse CDF of the chi-square distribution with ``df`` degrees of freedom."""
    _check_p(p)
    if df <= 0:
        raise InputFault("degrees of freedom must be positive")
    return _bisect(lambda x: gammainc(0.5 * df, 0.5 * x), p, 0.0, max(1.0, 2.0 * df))


def f_ppf(p, dfn, dfd):
    """Inverse CDF of the F distribution."""
    _check_p(p)
    if dfn <= 0 or dfd <= 0:
        raise InputFault("degrees of freedom must be positive")
    # F = (dfd * x) / (dfn * (1 - x)) with x ~ Beta(dfn/2, dfd/2)
    x = _bisect(lambda y: betainc(0.5 * dfn, 0.5 * dfd, y), p, 0.0, 1.0, tol=1e-15)
    if x >= 1.0:
        raise NumericalFault("F quantile at the edge of the support")
    return dfd * x / (dfn * (1.0 - x))
