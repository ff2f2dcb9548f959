#!/usr/bin/env python3
"""
Special-function kernel for the photocount formulas.

Features:
- Phi_k(x), the regularized Poisson tail used by every count distribution
- Kummer's confluent hypergeometric function M(a; b; x) and its transform
- Associated Laguerre polynomials by three-term recurrence
- Modified Bessel functions I_n(x) of integer order
- ln(n!) exact for small n, Stirling series beyond

Series are summed forward with Neumaier-compensated accumulation and stop
once the remaining tail is below rel_tol of the running sum.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from errors import InvalidParameter, NonConvergent
from settings import get_settings

_EXACT_LOG_FACTORIALS = tuple(math.log(math.factorial(n)) for n in range(21))
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SeriesControl:
    rel_tol: float = 1e-13
    max_terms: int = 10_000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise InvalidParameter(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise InvalidParameter(f"max_terms must be >= 1, got {self.max_terms}")

    @classmethod
    def default(cls) -> "SeriesControl":
        settings = get_settings()
        return cls(rel_tol=settings.rel_tol, max_terms=settings.max_terms)


class _CompensatedSum:
    """Neumaier running sum."""

    __slots__ = ("total", "compensation")

    def __init__(self):
        self.total = 0.0
        self.compensation = 0.0

    def add(self, value: float) -> None:
        t = self.total + value
        if abs(self.total) >= abs(value):
            self.compensation += (self.total - t) + value
        else:
            self.compensation += (value - t) + self.total
        self.total = t

    @property
    def value(self) -> float:
        return self.total + self.compensation


def _sum_series(first: float, ratio: Callable[[int], float],
                control: SeriesControl, name: str) -> float:
    """Sum t_0 = first, t_{m+1} = t_m * ratio(m) until the tail is negligible."""
    acc = _CompensatedSum()
    term = first
    for m in range(control.max_terms):
        acc.add(term)
        r = ratio(m)
        term = term * r
        if term == 0.0:
            return acc.value
        # geometric bound on what is left once terms shrink
        if abs(r) < 1.0 and abs(term) / (1.0 - abs(r)) <= control.rel_tol * abs(acc.value):
            acc.add(term)
            return acc.value
    raise NonConvergent(
        f"{name}: {control.max_terms} terms did not reach rel_tol={control.rel_tol}")


def clamp_probability(value: float, slack: Optional[float] = None) -> float:
    slack = get_settings().clamp_tol if slack is None else slack
    if -slack < value < 0.0:
        return 0.0
    if 1.0 < value < 1.0 + slack:
        return 1.0
    return value


def log_factorial(n: int) -> float:
    """ln(n!); exact table up to 20, Stirling series above."""
    if n < 0:
        raise InvalidParameter(f"log_factorial needs n >= 0, got {n}")
    if n <= 20:
        return _EXACT_LOG_FACTORIALS[n]
    x = float(n)
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    return (x + 0.5) * math.log(x) - x + _HALF_LOG_TWO_PI + series


@lru_cache(maxsize=32)
def log_factorials(n_max: int) -> np.ndarray:
    """Read-only array of ln(n!) for n = 0..n_max."""
    table = np.array([log_factorial(n) for n in range(n_max + 1)], dtype=float)
    table.setflags(write=False)
    return table


def log_binomial(n: np.ndarray, k: int) -> np.ndarray:
    n = np.asarray(n, dtype=int)
    table = log_factorials(int(n.max(initial=k)))
    return table[n] - table[k] - table[n - k]


def poisson_weights(x: float, n_max: int) -> np.ndarray:
    """e^{-x} x^n / n! for n = 0..n_max, evaluated in log space."""
    if x < 0:
        raise InvalidParameter(f"Poisson mean must be >= 0, got {x}")
    weights = np.zeros(n_max + 1)
    if x == 0.0:
        weights[0] = 1.0
        return weights
    n = np.arange(n_max + 1)
    weights[:] = np.exp(n * math.log(x) - x - log_factorials(n_max))
    return weights


def phi_k(k: int, x: float, control: Optional[SeriesControl] = None) -> float:
    """Phi_k(x) = 1 - e^{-x} sum_{n<=k} x^n/n!, the chance of more than k Poisson events."""
    if k < 0:
        raise InvalidParameter(f"phi_k needs k >= 0, got {k}")
    if x < 0:
        raise InvalidParameter(f"phi_k needs x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    control = control or SeriesControl.default()

    if x < k + 1:
        # tail series: every term is positive, no cancellation
        first = math.exp((k + 1) * math.log(x) - x - log_factorial(k + 1))
        value = _sum_series(first, lambda m: x / (k + 2 + m), control, "phi_k")
    else:
        head = _CompensatedSum()
        log_x = math.log(x)
        for n in range(k + 1):
            head.add(math.exp(n * log_x - x - log_factorial(n)))
        value = 1.0 - head.value
    return clamp_probability(value)


def kummer_m(a: float, b: float, x: float, control: Optional[SeriesControl] = None) -> float:
    """Confluent hypergeometric M(a; b; x) = sum_m (a)_m x^m / ((b)_m m!)."""
    if b <= 0 and float(b).is_integer():
        raise InvalidParameter(f"kummer_m undefined for b = {b}")
    control = control or SeriesControl.default()
    return _sum_series(1.0, lambda m: (a + m) * x / ((b + m) * (m + 1)), control, "kummer_m")


def kummer_m_transformed(a: float, b: float, x: float,
                         control: Optional[SeriesControl] = None) -> float:
    """M(a; b; x) evaluated as e^x M(b - a; b; -x)."""
    return math.exp(x) * kummer_m(b - a, b, -x, control)


def laguerre_assoc(n: int, alpha: float, x: float) -> float:
    """Associated Laguerre polynomial L_n^alpha(x)."""
    if n < 0:
        raise InvalidParameter(f"laguerre_assoc needs n >= 0, got {n}")
    previous, current = 1.0, 1.0 + alpha - x
    if n == 0:
        return previous
    for j in range(1, n):
        previous, current = current, ((2 * j + 1 + alpha - x) * current - (j + alpha) * previous) / (j + 1)
    return current


def bessel_i(n: int, x: float, control: Optional[SeriesControl] = None) -> float:
    """Modified Bessel function I_n(x), integer n >= 0, x >= 0."""
    if n < 0:
        raise InvalidParameter(f"bessel_i needs n >= 0, got {n}")
    if x < 0:
        raise InvalidParameter(f"bessel_i needs x >= 0, got {x}")
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    control = control or SeriesControl.default()
    half = 0.5 * x
    first = math.exp(n * math.log(half) - log_factorial(n))
    quarter_sq = half * half
    return _sum_series(first, lambda m: quarter_sq / ((m + 1) * (m + n + 1)), control, "bessel_i")
