"""Student's t distribution via the regularized incomplete beta function.

Only what the ESD critical values need: the survival function and its
inverse. Plain ``math`` floats throughout; no SciPy dependency.
"""

from __future__ import annotations

import math
from statistics import NormalDist

from .errors import MathError

_TINY = 1e-300
_EPS = 1e-15
_MAX_ITER = 20000


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise MathError(f"incomplete beta failed to converge (a={a}, b={b}, x={x})")


def _stirling_tail(x: float) -> float:
    x2 = x * x
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * x2)) / x2) / x2) / x


def _lbeta(a: float, b: float) -> float:
    if max(a, b) < 50.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    if a < b:
        a, b = b, a
    # lgamma(a + b) - lgamma(a) without the cancellation of two huge terms
    ratio = (
        (a - 0.5) * math.log1p(b / a)
        + b * math.log(a + b)
        - b
        + _stirling_tail(a + b)
        - _stirling_tail(a)
    )
    return math.lgamma(b) - ratio


def betainc(a: float, b: float, x: float, xc: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``xc`` may carry ``1 - x`` computed without cancellation.
    """
    if a <= 0 or b <= 0:
        raise MathError("betainc requires a, b > 0")
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_x = math.log1p(-xc) if xc < 0.5 else math.log(x)
    log_xc = math.log1p(-x) if x < 0.5 else math.log(xc)
    front = math.exp(a * log_x + b * log_xc - _lbeta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, xc) / b


def t_sf(t: float, df: float) -> float:
    """Upper-tail probability P(T > t)."""
    if df <= 0:
        raise MathError("df must be positive")
    t2 = t * t
    x = df / (df + t2)
    tail = 0.5 * betainc(0.5 * df, 0.5, x, t2 / (df + t2))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return t_sf(-t, df)


def t_pdf(t: float, df: float) -> float:
    return math.exp(
        -0.5 * (df + 1.0) * math.log1p(t * t / df)
        - 0.5 * math.log(df)
        - _lbeta(0.5 * df, 0.5)
    )


def _inv_betainc_small_b(p: float, a: float, b: float) -> float:
    """Approximate inverse of I_x(a, b) for the t-distribution case (b = 1/2).

    Starting guess from the power-law behaviour near the ends, then Halley
    steps on x.
    """
    lna = math.log(a / (a + b))
    lnb = math.log(b / (a + b))
    t = math.exp(a * lna) / a
    u = math.exp(b * lnb) / b
    w = t + u
    if p < t / w:
        x = (a * w * p) ** (1.0 / a)
    else:
        x = 1.0 - (b * w * (1.0 - p)) ** (1.0 / b)
    afac = -_lbeta(a, b)
    a1, b1 = a - 1.0, b - 1.0
    for j in range(12):
        if x <= 0.0 or x >= 1.0:
            break
        err = betainc(a, b, x) - p
        dens = math.exp(a1 * math.log(x) + b1 * math.log1p(-x) + afac)
        u = err / dens
        step = u / (1.0 - 0.5 * min(1.0, u * (a1 / x - b1 / (1.0 - x))))
        x -= step
        if x <= 0.0:
            x = 0.5 * (x + step)
        if x >= 1.0:
            x = 0.5 * (x + step + 1.0)
        if abs(step) < 1e-10 * x and j > 0:
            break
    return min(max(x, 1e-300), 1.0)


def _cornish_fisher(q: float, df: float) -> float:
    """Upper-tail t quantile from the normal one, four correction terms."""
    z = -NormalDist().inv_cdf(q)
    z2 = z * z
    g1 = (z2 + 1.0) * z / 4.0
    g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0
    g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0
    g4 = ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) * z / 92160.0
    return z + (g1 + (g2 + (g3 + g4 / df) / df) / df) / df


def t_quantile(p: float, df: float) -> float:
    """Inverse CDF of Student's t with ``df`` degrees of freedom.

    The upper-tail probability ``q = min(p, 1 - p)`` is mapped to the
    incomplete-beta variable ``x = df / (df + t^2)`` through
    ``I_x(df/2, 1/2) = 2q``. For moderate and large ``df`` a Cornish-Fisher
    expansion supplies the starting point instead; either way Newton
    iterations on ``t_sf`` polish the root to full precision.
    """
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise MathError(f"p must lie in (0, 1), got {p}")
    if not df > 0 or math.isinf(df):
        raise MathError(f"df must be positive and finite, got {df}")
    if p == 0.5:
        return 0.0
    q = p if p < 0.5 else 1.0 - p
    if df == 1.0:
        t = math.tan(math.pi * (0.5 - q))
    elif df == 2.0:
        t = math.sqrt(2.0 / (4.0 * q * (1.0 - q)) - 2.0)
    elif df >= 8.0 and q > 1e-12:
        t = _cornish_fisher(q, df)
    else:
        x = _inv_betainc_small_b(2.0 * q, 0.5 * df, 0.5)
        t = math.sqrt(df * (1.0 - x) / x) if x < 1.0 else 0.0
    # Newton polish on the upper tail, bracketed to stay positive
    lo, hi = 0.0, math.inf
    for _ in range(100):
        f = t_sf(t, df) - q
        if f > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
        dens = t_pdf(t, df)
        step = f / dens if dens > 0 else math.inf
        new = t + step
        if not (lo < new < hi) or not math.isfinite(new):
            new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(t, 1.0)
        if abs(new - t) <= 1e-14 * max(1.0, abs(t)):
            t = new
            break
        t = new
    return t if p > 0.5 else -t
