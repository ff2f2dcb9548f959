#!/usr/bin/env python3
"""
Counting statistics for the SD and EP photodetection models.

Features:
- P(k, t) for an arbitrary photon distribution and per-family closed forms
- Whole count distributions with automatic K_max and a recorded deficit
- Elementary probability densities (EPD) of timed count sequences
- Moments of the count distribution
- Post-selected states N_t(k) rho / P(k, t), closed form (EP) and nested quadrature
- Semiclassical short-time counting formula with its validity flag
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from errors import (InvalidParameter, NonConvergent, UnsupportedFamily,
                    UnsupportedOrder, ZeroProbability)
from fock_operators import (ModelKind, OperatorSet, conjugate_diagonal, jump_matrix,
                            jump_weight, no_count_evolve, no_count_probability,
                            no_count_propagator)
from photon_states import (DensityMatrix, PhotonStatistics, StateFamily, StateSpec,
                           partial_sums)
from settings import get_settings
from specfun import clamp_probability, log_binomial, log_factorial, phi_k

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountDistribution:
    probs: np.ndarray
    t: float
    gamma: float
    model: ModelKind
    tail_mass: float = 0.0

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if np.any(probs < 0):
            raise InvalidParameter("Count probabilities must be non-negative")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def k_max(self) -> int:
        return self.probs.size - 1

    @property
    def deficit(self) -> float:
        return 1.0 - math.fsum(self.probs)


@dataclass(frozen=True)
class CountTimes:
    """Ordered count times t_1 < ... < t_k inside the window [0, window]."""

    times: Tuple[float, ...]
    window: float = math.inf

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if any(t <= 0 for t in times):
            raise InvalidParameter("Count times must be positive")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidParameter(f"Count times must be strictly increasing: {times}")
        if times and self.window < times[-1]:
            raise InvalidParameter(f"Window {self.window} ends before the last count {times[-1]}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "window", float(self.window))

    @property
    def k(self) -> int:
        return len(self.times)


def _check_time(k: int, t: float, gamma: float) -> float:
    if k < 0:
        raise InvalidParameter(f"Count number must be >= 0, got {k}")
    if t < 0:
        raise InvalidParameter(f"Observation time must be >= 0, got {t}")
    if not gamma > 0:
        raise InvalidParameter(f"gamma must be positive, got {gamma}")
    return gamma * t


def _poisson_term(k: int, x: float) -> float:
    """e^{-x} x^k / k!"""
    if x == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(x) - x - log_factorial(k))


def _p_at(p: PhotonStatistics, n: int) -> float:
    return float(p.p[n]) if n < p.trunc_dim else 0.0


def prob_counts(p: PhotonStatistics, k: int, t: float, gamma: float, model: ModelKind) -> float:
    """Probability of exactly k counts in [0, t]; t = inf gives the photon statistics p_k."""
    x = _check_time(k, t, gamma)
    if math.isinf(x):
        return _p_at(p, k)

    if model is ModelKind.EP:
        z_k = 1.0 if k == 0 else partial_sums(p, k - 1)[1]
        value = _p_at(p, k) * phi_k(k, x) + _poisson_term(k, x) * z_k
        return clamp_probability(value)

    if k >= p.trunc_dim:
        return 0.0
    if x == 0.0:
        return 1.0 if k == 0 else 0.0
    n = np.arange(k, p.trunc_dim)
    weights = p.p[k:]
    mask = weights > 0
    if not np.any(mask):
        return 0.0
    log_terms = (log_binomial(n[mask], k) + k * math.log(-math.expm1(-x))
                 - x * (n[mask] - k) + np.log(weights[mask]))
    return clamp_probability(math.fsum(np.exp(log_terms)))


def prob_counts_closed_family(spec: StateSpec, k: int, t: float, gamma: float,
                              model: ModelKind) -> float:
    """Per-family closed forms for Fock, Coherent and Thermal light, no truncation involved."""
    x = _check_time(k, t, gamma)
    spec = spec.validated()
    family = spec.family

    if family is StateFamily.FOCK:
        m = spec.m
        if k > m:
            return 0.0
        if math.isinf(x):
            return 1.0 if k == m else 0.0
        if model is ModelKind.SD:
            if x == 0.0:
                return 1.0 if k == 0 else 0.0
            return math.exp(log_binomial(np.array([m]), k)[0]
                            + k * math.log(-math.expm1(-x)) - x * (m - k))
        if k < m:
            return _poisson_term(k, x)
        return phi_k(m - 1, x) if m > 0 else 1.0

    if family is StateFamily.COHERENT:
        nbar = spec.nbar
        if math.isinf(x):
            return _poisson_term(k, nbar)
        if model is ModelKind.SD:
            return _poisson_term(k, nbar * -math.expm1(-x))
        below = 1.0 if k == 0 else phi_k(k - 1, nbar)
        return clamp_probability(_poisson_term(k, x) * below + _poisson_term(k, nbar) * phi_k(k, x))

    if family is StateFamily.THERMAL:
        nbar = spec.nbar
        geometric = (nbar / (1.0 + nbar)) ** k / (1.0 + nbar)
        if math.isinf(x):
            return geometric
        if model is ModelKind.SD:
            y = nbar * -math.expm1(-x)
            return (y / (1.0 + y)) ** k / (1.0 + y)
        ratio = nbar / (nbar + 1.0)
        return clamp_probability(_poisson_term(k, x) * ratio ** k + geometric * phi_k(k, x))

    raise UnsupportedFamily(f"No closed counting form for {family.value} light")


def count_distribution(p: PhotonStatistics, t: float, gamma: float, model: ModelKind,
                       k_max: Optional[int] = None) -> CountDistribution:
    """P(k, t) for k = 0..K_max. Without k_max, stop once the cumulative sum reaches 1 - tol."""
    x = _check_time(0, t, gamma)
    if k_max is not None:
        if k_max < 1:
            raise InvalidParameter(f"K_max must be >= 1, got {k_max}")
        probs = [prob_counts(p, k, t, gamma, model) for k in range(k_max + 1)]
    else:
        tol = get_settings().kmax_cumulative_tol
        cap = p.trunc_dim + (0 if math.isinf(x) else math.ceil(10.0 * x))
        probs, cumulative = [], 0.0
        for k in range(cap + 1):
            probs.append(prob_counts(p, k, t, gamma, model))
            cumulative += probs[-1]
            if k >= 1 and cumulative >= 1.0 - tol:
                break
        logger.debug("count_distribution: K_max=%d (cap %d) cumulative=%.15f",
                     len(probs) - 1, cap, cumulative)
    return CountDistribution(np.array(probs), t, gamma, model, p.tail_mass)


def _epd_dimensionless_raw(p: PhotonStatistics, times: Sequence[float], window: float,
                           gamma: float, model: ModelKind) -> float:
    k = len(times)
    if k == 0:
        return no_count_probability(p, window, gamma, model)
    p_k = _p_at(p, k)
    if model is ModelKind.EP:
        value = math.exp(-gamma * times[-1]) * p_k
        if not math.isinf(window):
            value += math.exp(-gamma * window) * partial_sums(p, k)[1]
        return value

    prefactor = math.exp(log_factorial(k) - gamma * math.fsum(times))
    if math.isinf(window):
        return prefactor * p_k
    if k >= p.trunc_dim:
        return 0.0
    n = np.arange(k, p.trunc_dim)
    coefficients = np.exp(log_binomial(n, k) - gamma * (n - k) * window)
    return prefactor * math.fsum(coefficients * p.p[k:])


def epd_dimensionless(p: PhotonStatistics, times: CountTimes, gamma: float,
                      model: ModelKind) -> float:
    """EPD divided by gamma^k."""
    return _epd_dimensionless_raw(p, times.times, times.window, gamma, model)


def epd(p: PhotonStatistics, times: CountTimes, gamma: float, model: ModelKind) -> float:
    """Density (time^-k) of counts at exactly t_1..t_k and none elsewhere in the window."""
    return gamma ** times.k * epd_dimensionless(p, times, gamma, model)


def epd_simplex_mass(p: PhotonStatistics, k: int, gamma: float, model: ModelKind,
                     window: float = math.inf, epsabs: Optional[float] = None,
                     epsrel: Optional[float] = None) -> float:
    """Integral of the EPD over 0 < t_1 < ... < t_k < window; equals P(k, window)."""
    if k == 0:
        return no_count_probability(p, window, gamma, model)
    if k > 3:
        raise UnsupportedOrder(f"Simplex quadrature is limited to k <= 3, got {k}")
    settings = get_settings()
    opts = {"epsabs": epsabs or settings.quad_epsabs, "epsrel": epsrel or settings.quad_epsrel}

    def density(*ts):
        return gamma ** k * _epd_dimensionless_raw(p, ts, window, gamma, model)

    # nquad passes the outer variables (t_{i+1}, ...) to the range of t_i
    ranges = [lambda *outer: (0.0, outer[0]) for _ in range(k - 1)]
    ranges.append((0.0, window))
    value, error = integrate.nquad(density, ranges, opts=[opts] * k)
    logger.debug("epd_simplex_mass k=%d: %.15g (+/- %.2e)", k, value, error)
    return value


def _product_residual(p: PhotonStatistics, times: CountTimes, gamma: float,
                      model: ModelKind, factors: Callable[[int, float, float], float]) -> float:
    k = times.k
    p_k = _p_at(p, k)
    if p_k <= 0:
        raise ZeroProbability(f"p_{k} = 0, the long-window EPD ratio is undefined")
    asymptotic = CountTimes(times.times, math.inf)
    ratio = epd(p, asymptotic, gamma, model) / p_k
    previous = 0.0
    product = 1.0
    for i, t_i in enumerate(times.times, start=1):
        product *= factors(i, t_i, previous)
        previous = t_i
    return abs(ratio - product)


def epd_markov_factorization_residual(p: PhotonStatistics, times: CountTimes, gamma: float) -> float:
    """|EPD_EP / p_k - prod gamma e^{-gamma (t_i - t_{i-1})}| in the long-window limit."""
    return _product_residual(p, times, gamma, ModelKind.EP,
                             lambda i, t, prev: gamma * math.exp(-gamma * (t - prev)))


def epd_sd_product_residual(p: PhotonStatistics, times: CountTimes, gamma: float) -> float:
    """|EPD_SD / p_k - prod i gamma e^{-gamma t_i}|: each later count enters with weight i."""
    return _product_residual(p, times, gamma, ModelKind.SD,
                             lambda i, t, prev: i * gamma * math.exp(-gamma * t))


def moments(p: PhotonStatistics, l: int, t: float, gamma: float, model: ModelKind) -> float:
    """sum_k k^l P(k, t)."""
    if l < 1:
        raise InvalidParameter(f"Moment order must be >= 1, got {l}")
    dist = count_distribution(p, t, gamma, model)
    tol = get_settings().moment_deficit_tol
    if dist.deficit - dist.tail_mass > tol:
        raise NonConvergent(
            f"Count distribution deficit {dist.deficit:.3e} at K_max={dist.k_max} exceeds {tol:.1e}")
    k = np.arange(dist.probs.size, dtype=float)
    return math.fsum(k ** l * dist.probs)


def _stacked(matrix: np.ndarray) -> np.ndarray:
    return np.concatenate([matrix.real.ravel(), matrix.imag.ravel()])


def _integrate_matrix(integrand: Callable[[float], np.ndarray], upper: float, dim: int,
                      epsabs: Optional[float], epsrel: Optional[float]) -> np.ndarray:
    """Entrywise adaptive quadrature of a complex matrix-valued function over [0, upper]."""
    settings = get_settings()
    if upper == 0.0:
        return np.zeros((dim, dim), dtype=complex)
    values, error = integrate.quad_vec(
        lambda s: _stacked(integrand(s)), 0.0, upper,
        epsabs=epsabs or settings.quad_epsabs, epsrel=epsrel or settings.quad_epsrel)
    logger.debug("quad_vec over [0, %.6g]: error estimate %.2e", upper, error)
    half = dim * dim
    return (values[:half] + 1j * values[half:]).reshape(dim, dim)


def _check_state(rho: DensityMatrix, k: int, t: float, ops: OperatorSet) -> np.ndarray:
    _check_time(k, t, ops.gamma)
    if math.isinf(t):
        raise InvalidParameter("Count operators need a finite observation time")
    if rho.trunc_dim != ops.dim:
        raise InvalidParameter(f"State dimension {rho.trunc_dim} does not match operators ({ops.dim})")
    return rho.entries


def nested_count_operator(rho: DensityMatrix, k: int, t: float, ops: OperatorSet,
                          model: ModelKind, epsabs: Optional[float] = None,
                          epsrel: Optional[float] = None) -> DensityMatrix:
    """N_t(k) rho by the recursion N_t(k) = int_0^t ds S_{t-s} J N_s(k-1), N_s(0) = S_s."""
    r0 = _check_state(rho, k, t, ops)
    weight = jump_weight(ops, model)

    def action(order: int, s: float) -> np.ndarray:
        if order == 0:
            return conjugate_diagonal(r0, no_count_propagator(s, ops, model))

        def integrand(u: float) -> np.ndarray:
            counted = weight * jump_matrix(action(order - 1, u), ops, model)
            return conjugate_diagonal(counted, no_count_propagator(s - u, ops, model))

        return _integrate_matrix(integrand, s, ops.dim, epsabs, epsrel)

    return DensityMatrix(action(k, t))


def brute_force_prob_counts(rho: DensityMatrix, k: int, t: float, ops: OperatorSet,
                            model: ModelKind) -> float:
    return nested_count_operator(rho, k, t, ops, model).trace()


def count_operator_action(rho: DensityMatrix, k: int, t: float, ops: OperatorSet,
                          model: ModelKind) -> DensityMatrix:
    """Unnormalized N_t(k) rho; its trace is P(k, t)."""
    r = _check_state(rho, k, t, ops)
    if k == 0:
        return no_count_evolve(rho, t, ops, model)
    if model is ModelKind.SD:
        if k > 3:
            raise UnsupportedOrder(f"SD count operator is only built for k <= 3, got {k}")
        return nested_count_operator(rho, k, t, ops, model)

    shifted = r
    for _ in range(k):
        shifted = jump_matrix(shifted, ops, model)
    gamma = ops.gamma
    scale = gamma ** k / math.factorial(k - 1)

    def integrand(s: float) -> np.ndarray:
        damping = np.full(ops.dim, math.exp(-0.5 * gamma * (t - s)))
        damping[0] = 1.0
        weight = scale * s ** (k - 1) * math.exp(-gamma * s)
        return weight * conjugate_diagonal(shifted, damping)

    integrated = _integrate_matrix(integrand, t, ops.dim, None, None)
    phase = np.exp(-1j * ops.omega * ops.number * t)
    return DensityMatrix(conjugate_diagonal(integrated, phase))


def post_selected_state(rho: DensityMatrix, k: int, t: float, ops: OperatorSet,
                        model: ModelKind) -> DensityMatrix:
    """State after observing exactly k counts in [0, t]."""
    unnormalized = count_operator_action(rho, k, t, ops, model)
    probability = unnormalized.trace()
    if probability <= get_settings().vacuum_tol:
        raise ZeroProbability(f"P({k}, {t}) = {probability:.3e}, nothing to post-select")
    return DensityMatrix(unnormalized.entries / probability)


def prob_counts_semiclassical(p: PhotonStatistics, k: int, t: float,
                              gamma: float) -> Tuple[float, bool]:
    """Short-time formula sum_n C(n,k) (1 - gamma t)^{n-k} (gamma t)^k p_n, valid for gamma t <= 1."""
    x = _check_time(k, t, gamma)
    valid = x <= 1.0
    if k >= p.trunc_dim or math.isinf(x):
        return 0.0, valid
    n = np.arange(k, p.trunc_dim)
    coefficients = np.exp(log_binomial(n, k))
    terms = coefficients * np.power(1.0 - x, n - k) * x ** k * p.p[k:]
    return math.fsum(terms), valid
