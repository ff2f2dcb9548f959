#!/usr/bin/env python3
"""
Tests for state specifications, photon statistics and density matrices.
"""

import math
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from errors import InvalidParameter
from photon_states import (PhotonStatistics, StateFamily, StateSpec,
                           make_density_matrix, make_distribution, mean_and_q,
                           nominal_mean, partial_sums)


def test_fock_distribution():
    p = make_distribution(StateSpec.fock(5))
    assert p.trunc_dim == 6
    assert p.p[5] == 1.0
    assert math.fsum(p.p[:5]) == 0.0
    assert p.tail_mass == 0.0


def test_thermal_distribution():
    p = make_distribution(StateSpec.thermal(5.0))
    n = np.arange(20)
    assert_allclose(p.p[:20], 5.0 ** n / 6.0 ** (n + 1), rtol=1e-12)
    assert_allclose(p.p[0], 1.0 / 6.0, rtol=1e-14)
    assert p.tail_mass < 1e-12


def test_negative_binomial_mu_one_is_thermal():
    thermal = make_distribution(StateSpec.thermal(5.0))
    negbin = make_distribution(StateSpec.negative_binomial(1.0, 5.0))
    assert_allclose(negbin.p, thermal.p, rtol=1e-14)


def test_negative_binomial_matches_scipy():
    mu, nbar = 2.5, 3.0
    p = make_distribution(StateSpec.negative_binomial(mu, nbar))
    expected = stats.nbinom.pmf(p.support, mu, mu / (mu + nbar))
    assert_allclose(p.p, expected, rtol=1e-10)


def test_negative_binomial_approaches_poisson():
    negbin = make_distribution(StateSpec.negative_binomial(1e6, 4.0))
    poisson = make_distribution(StateSpec.coherent(4.0))
    dim = min(negbin.trunc_dim, poisson.trunc_dim)
    assert np.max(np.abs(negbin.p[:dim] - poisson.p[:dim])) < 1e-4


def test_binomial_and_phase_distributions():
    binomial = make_distribution(StateSpec.binomial(5, 2.0))
    assert_allclose(binomial.p, stats.binom.pmf(np.arange(6), 5, 0.4), rtol=1e-12)
    phase = make_distribution(StateSpec.coherent_phase(0.6 + 0.3j))
    r2 = 0.45
    assert_allclose(phase.p[:10], (1 - r2) * r2 ** np.arange(10), rtol=1e-12)
    assert_allclose(nominal_mean(StateSpec.coherent_phase(0.6 + 0.3j)), r2 / (1 - r2))


@pytest.mark.parametrize("build", [
    lambda: StateSpec.coherent_phase(1.0),
    lambda: StateSpec.negative_binomial(0.0, 2.0),
    lambda: StateSpec.binomial(3, 4.0),
    lambda: StateSpec.thermal(-1.0),
    lambda: StateSpec.fock(-1),
])
def test_invalid_specs(build):
    with pytest.raises(InvalidParameter):
        build()


def test_custom_negative_entry_names_index():
    with pytest.raises(InvalidParameter, match="index 2"):
        StateSpec.custom([0.5, 0.6, -0.1]).validated()


def test_from_mapping():
    spec = StateSpec.from_mapping({"state": "negbinomial", "mu": 2, "nbar": 3})
    assert spec.family is StateFamily.NEG_BINOMIAL
    assert spec.mu == 2.0 and spec.nbar == 3.0
    with pytest.raises(InvalidParameter, match="nbar"):
        StateSpec.from_mapping({"state": "thermal"})
    with pytest.raises(InvalidParameter):
        StateSpec.from_mapping({"state": "squeezed"})


def test_photon_statistics_validation():
    with pytest.raises(InvalidParameter, match="index 1"):
        PhotonStatistics(np.array([1.1, -0.1]))
    with pytest.raises(InvalidParameter):
        PhotonStatistics(np.array([0.5, 0.4]))
    p = PhotonStatistics(np.array([0.5, 0.4]), 0.1)
    with pytest.raises(ValueError):
        p.p[0] = 0.0


def test_truncated_moves_mass_to_tail():
    p = make_distribution(StateSpec.thermal(5.0))
    cut = p.truncated(3)
    assert cut.trunc_dim == 3
    assert_allclose(cut.tail_mass, (5.0 / 6.0) ** 3, rtol=1e-10)
    assert p.truncated(p.trunc_dim + 4).trunc_dim == p.trunc_dim + 4


def test_density_matrices():
    fock = make_density_matrix(StateSpec.fock(2), dim=5)
    expected = np.zeros((5, 5))
    expected[2, 2] = 1.0
    assert_allclose(fock.entries, expected)

    coherent = make_density_matrix(StateSpec.coherent(1.0))
    assert_allclose(coherent.entries[0, 1].real, math.exp(-1.0), rtol=1e-12)
    coherent.validate()

    thermal = make_density_matrix(StateSpec.thermal(5.0))
    assert thermal.is_diagonal()
    assert_allclose(thermal.diagonal(), make_distribution(StateSpec.thermal(5.0)).p)


def test_phase_state_is_pure():
    rho = make_density_matrix(StateSpec.coherent_phase(0.5j))
    rho.validate(trace_tol=1e-11)
    assert_allclose(np.trace(rho.entries @ rho.entries).real, rho.trace() ** 2, rtol=1e-10)


def test_mean_and_q():
    nbar, q = mean_and_q(make_distribution(StateSpec.coherent(5.0)))
    assert_allclose(nbar, 5.0, rtol=1e-10)
    assert abs(q) < 1e-9
    assert mean_and_q(make_distribution(StateSpec.fock(5))) == (5.0, -1.0)
    nbar, q = mean_and_q(make_distribution(StateSpec.thermal(5.0)))
    assert_allclose((nbar, q), (5.0, 5.0), rtol=1e-9)


def test_coherent_phase_matches_thermal():
    for z in (0.3, 0.6 + 0.3j, 0.9j):
        r2 = abs(z) ** 2
        phase = make_distribution(StateSpec.coherent_phase(z))
        thermal = make_distribution(StateSpec.thermal(r2 / (1.0 - r2)))
        n = min(phase.trunc_dim, thermal.trunc_dim)
        assert np.max(np.abs(phase.p[:n] - thermal.p[:n])) < 1e-12


def test_binomial_family_means():
    nbar, q = mean_and_q(make_distribution(StateSpec.binomial(5, 2.0)))
    assert_allclose((nbar, q), (2.0, -0.4), rtol=1e-12)
    nbar, q = mean_and_q(make_distribution(StateSpec.negative_binomial(2.0, 3.0)))
    assert_allclose((nbar, q), (3.0, 1.5), rtol=1e-8)
    for spec in (StateSpec.binomial(5, 2.0), StateSpec.negative_binomial(2.0, 3.0)):
        assert_allclose(mean_and_q(make_distribution(spec))[0], nominal_mean(spec), rtol=1e-8)


def test_large_coherent_state_is_normalized():
    p = make_distribution(StateSpec.coherent(1.0e4))
    assert abs(math.fsum(p.p) + p.tail_mass - 1.0) <= 1e-12
    assert_allclose(mean_and_q(p)[0], 1.0e4, rtol=1e-10)


def test_normalization_tolerance_is_tight():
    with pytest.raises(InvalidParameter, match="sum to"):
        PhotonStatistics(np.array([0.5, 0.5 + 1e-11]))
    PhotonStatistics(np.array([0.5, 0.5 + 1e-13]))


def test_partial_sums():
    fock = make_distribution(StateSpec.fock(5))
    assert partial_sums(fock, 4) == (0.0, 1.0)
    assert partial_sums(fock, 5) == (1.0, 0.0)
    a0, z1 = partial_sums(make_distribution(StateSpec.thermal(5.0)), 0)
    assert_allclose((a0, z1), (1.0 / 6.0, 5.0 / 6.0), rtol=1e-14)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
