"""Paired t-test with a self-contained Student t tail probability."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean, stdev
from typing import Sequence

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000
# spread this small relative to the differences is rounding noise, not variance
_ZERO_SPREAD = 1e-12


def _beta_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _MAX_TERMS):
        m2 = 2 * m
        for num in (m * (b - m) * x / ((qam + m2) * (a + m2)),
                    -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))):
            d = 1.0 + num * d
            d = 1.0 / (d if abs(d) > _TINY else _TINY)
            c = 1.0 + num / c
            c = c if abs(c) > _TINY else _TINY
            h *= d * c
        if abs(d * c - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only on one side of the mean; use symmetry on the other
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_fraction(a, b, x) / a
    return 1.0 - front * _beta_fraction(b, a, 1.0 - x) / b


def t_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, regularized_beta(df / (df + t * t), df / 2.0, 0.5)))


@dataclass(frozen=True)
class TTest:
    t: float
    p_value: float
    df: int
    mean_diff: float

    def to_dict(self) -> dict:
        return {"t": self.t, "pValue": self.p_value, "df": self.df, "meanDiff": self.mean_diff}


def paired_t_test(before: Sequence[float], after: Sequence[float]) -> TTest:
    """Two-tailed paired test on ``after - before``.

    Zero differences give t = 0, p = 1. Identical non-zero differences have no
    spread, so t is reported as signed infinity with p = 0.
    """
    if len(before) != len(after):
        raise ValueError("before and after must have the same length")
    n = len(before)
    if n < 2:
        raise ValueError("need at least two pairs")
    diffs = [float(a) - float(b) for a, b in zip(after, before)]
    mean = fmean(diffs)
    sd = stdev(diffs)
    df = n - 1
    if sd <= _ZERO_SPREAD * max(1.0, abs(mean)):
        if abs(mean) <= _ZERO_SPREAD:
            return TTest(0.0, 1.0, df, 0.0)
        return TTest(math.copysign(math.inf, mean), 0.0, df, mean)
    t = mean / (sd / math.sqrt(n))
    return TTest(t, t_two_sided(t, df), df, mean)
