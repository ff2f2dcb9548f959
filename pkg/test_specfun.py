#!/usr/bin/env python3
"""
Tests for the special-function kernel, checked against scipy.special.
"""

import math
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from errors import InvalidParameter, NonConvergent
from specfun import (SeriesControl, bessel_i, kummer_m, kummer_m_transformed,
                     laguerre_assoc, log_binomial, log_factorial, log_factorials,
                     phi_k, poisson_weights)


def test_phi_k_small_cases():
    assert_allclose(phi_k(0, 1.0), 1.0 - math.exp(-1.0), rtol=1e-14)
    assert phi_k(4, 0.0) == 0.0
    assert_allclose(phi_k(4, 1.0), 1.0 - math.exp(-1.0) * 65.0 / 24.0, rtol=1e-12)
    assert phi_k(3, math.inf) == 1.0


@pytest.mark.parametrize("k", [0, 1, 4, 10, 50])
@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 12.0, 80.0])
def test_phi_k_matches_regularized_gamma(k, x):
    # Phi_k(x) = P(k + 1, x)
    assert_allclose(phi_k(k, x), special.gammainc(k + 1, x), rtol=1e-11, atol=1e-300)


def test_phi_k_stays_in_unit_interval():
    for k in range(0, 30, 3):
        for x in np.linspace(0.0, 60.0, 31):
            value = phi_k(k, float(x))
            assert 0.0 <= value <= 1.0


def test_phi_k_rejects_bad_domain():
    with pytest.raises(InvalidParameter):
        phi_k(-1, 1.0)
    with pytest.raises(InvalidParameter):
        phi_k(2, -0.5)


def test_kummer_known_values():
    assert kummer_m(2.5, 3.0, 0.0) == 1.0
    assert_allclose(kummer_m(1.0, 1.0, 0.7), math.exp(0.7), rtol=1e-13)
    assert_allclose(kummer_m(2.0, 3.0, 1.5), special.hyp1f1(2.0, 3.0, 1.5), rtol=1e-12)


@pytest.mark.parametrize("a, b, x", [(3.0, 2.0, 4.0), (0.5, 6.0, 2.2), (-2.0, 3.0, 1.7), (12.0, 11.0, 7.5)])
def test_kummer_and_transform_agree(a, b, x):
    direct = kummer_m(a, b, x)
    assert_allclose(direct, special.hyp1f1(a, b, x), rtol=1e-11)
    assert_allclose(kummer_m_transformed(a, b, x), direct, rtol=1e-10)


def test_kummer_budget_exhaustion():
    with pytest.raises(NonConvergent):
        kummer_m(1.0, 1.0, 50.0, SeriesControl(rel_tol=1e-16, max_terms=5))


def test_series_control_validates():
    with pytest.raises(InvalidParameter):
        SeriesControl(rel_tol=0.0)
    with pytest.raises(InvalidParameter):
        SeriesControl(max_terms=0)


def test_laguerre_low_orders():
    assert laguerre_assoc(0, 3, 2.7) == 1.0
    assert_allclose(laguerre_assoc(1, 2, 0.5), 2.5)


@pytest.mark.parametrize("n, alpha, x", [(3, 1, 1.2), (5, 0, -2.0), (9, 4, 3.3), (2, 7, -6.0)])
def test_laguerre_matches_scipy(n, alpha, x):
    assert_allclose(laguerre_assoc(n, alpha, x), special.eval_genlaguerre(n, alpha, x), rtol=1e-12)


def test_bessel_values():
    assert bessel_i(0, 0.0) == 1.0
    assert bessel_i(3, 0.0) == 0.0
    assert_allclose(bessel_i(1, 2.0), 1.5906368546373291, rtol=1e-13)
    for n in (0, 2, 7):
        for x in (0.3, 5.0, 31.6):
            assert_allclose(bessel_i(n, x), special.iv(n, x), rtol=1e-12)


@pytest.mark.parametrize("n", range(7))
@pytest.mark.parametrize("alpha, x", [(0.0, 0.7), (1.5, 2.0), (3.0, 5.5)])
def test_kummer_terminates_as_laguerre(n, alpha, x):
    expected = math.factorial(n) / special.poch(alpha + 1.0, n) * laguerre_assoc(n, alpha, x)
    assert_allclose(kummer_m(-n, alpha + 1.0, x), expected, rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("x", [0.5, 4.0, 20.0])
def test_bessel_generating_sum(x):
    total = bessel_i(0, x) + 2.0 * math.fsum(bessel_i(n, x) for n in range(1, 80))
    assert_allclose(total, math.exp(x), rtol=1e-12)


def test_phi_k_is_monotone():
    xs = np.linspace(0.0, 25.0, 101)
    for k in range(6):
        values = [phi_k(k, x) for x in xs]
        assert all(b >= a - 1e-15 for a, b in zip(values, values[1:])), k
    for x in (0.3, 2.0, 9.0):
        values = [phi_k(k, x) for k in range(12)]
        assert all(b <= a + 1e-15 for a, b in zip(values, values[1:])), x


def test_log_factorial():
    assert log_factorial(0) == 0.0
    assert_allclose(log_factorial(5), math.log(120.0), rtol=1e-15)
    assert_allclose(log_factorial(100), math.fsum(math.log(j) for j in range(1, 101)), rtol=1e-14)
    assert_allclose(log_factorial(1000), special.gammaln(1001.0), rtol=1e-14)
    with pytest.raises(InvalidParameter):
        log_factorial(-3)


def test_log_factorial_table_is_read_only():
    table = log_factorials(30)
    assert table.shape == (31,)
    with pytest.raises(ValueError):
        table[3] = 0.0


def test_log_binomial_and_poisson_weights():
    n = np.arange(4, 12)
    assert_allclose(np.exp(log_binomial(n, 4)), special.comb(n, 4), rtol=1e-12)
    weights = poisson_weights(2.5, 40)
    assert_allclose(weights, [math.exp(-2.5) * 2.5 ** j / math.factorial(j) for j in range(41)], rtol=1e-12)
    assert poisson_weights(0.0, 3).tolist() == [1.0, 0.0, 0.0, 0.0]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
