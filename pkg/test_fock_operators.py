#!/usr/bin/env python3
"""
Tests for the truncated Fock operators and the count / no-count maps.
"""

import math
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import InvalidParameter, VacuumOnly
from fock_operators import (ModelKind, PureState, build_operators, free_evolve, jump,
                            jump_weight, mean_after_one_count, no_count_evolve,
                            no_count_evolve_pure, no_count_probability, post_count_state,
                            rate_operator, trace_rate_identity_check)
from photon_states import (DensityMatrix, StateSpec, make_density_matrix, make_distribution,
                           mean_and_q)

BOTH = [ModelKind.SD, ModelKind.EP]


def fock_matrix(m, dim):
    return make_density_matrix(StateSpec.fock(m), dim=dim)


def diagonal_mean(rho):
    d = rho.diagonal()
    return float(np.arange(d.size) @ d) / rho.trace()


def test_shift_algebra():
    ops = build_operators(3, 1.0)
    assert_allclose(ops.e_minus @ ops.e_plus, np.diag([1.0, 1.0, 0.0]))

    ops = build_operators(8, 1.0)
    commutator = ops.e_minus @ ops.e_plus - ops.e_plus @ ops.e_minus
    assert_allclose(commutator[:7, :7], ops.lambda0[:7, :7])
    assert_allclose(ops.e_plus @ ops.e_minus + ops.lambda0, np.eye(8))
    assert_allclose(np.diag(1.0 / np.sqrt(ops.number + 1.0)) @ ops.a, ops.e_minus)


def test_operators_are_read_only():
    ops = build_operators(4, 1.0)
    with pytest.raises(ValueError):
        ops.a[0, 1] = 2.0


@pytest.mark.parametrize("dim, gamma", [(1, 1.0), (4, 0.0), (4, -2.0)])
def test_build_operators_rejects(dim, gamma):
    with pytest.raises(InvalidParameter):
        build_operators(dim, gamma)


@pytest.mark.parametrize("model", BOTH)
def test_rate_operator_matches_weighted_jump_trace(model):
    ops = build_operators(12, 2.0)
    rho = make_density_matrix(StateSpec.coherent(1.5), dim=12)
    rate = float(np.real(np.trace(rate_operator(ops, model) @ rho.entries)))
    counted = jump_weight(ops, model) * jump(rho, ops, model).trace()
    assert rate == pytest.approx(counted, rel=1e-12)
    assert jump_weight(ops, ModelKind.EP) == 2.0
    assert jump_weight(ops, ModelKind.SD) == 1.0


def test_free_evolve_rotates_coherences():
    ops = build_operators(6, 1.0, omega=0.7)
    rho = make_density_matrix(StateSpec.coherent(1.0), dim=6)
    rotated = free_evolve(rho, 2.0, ops).entries
    assert_allclose(np.diag(rotated), np.diag(rho.entries), atol=1e-15)
    assert rotated[2, 0] == pytest.approx(rho.entries[2, 0] * np.exp(-1j * 0.7 * 2 * 2.0))


def test_model_parse():
    assert ModelKind.parse(" EP ") is ModelKind.EP
    with pytest.raises(InvalidParameter):
        ModelKind.parse("homodyne")


def test_jump_examples():
    ops = build_operators(6, 1.0)
    ep = jump(fock_matrix(3, 6), ops, ModelKind.EP)
    assert_allclose(ep.entries, fock_matrix(2, 6).entries)
    assert jump(fock_matrix(0, 6), ops, ModelKind.EP).trace() == 0.0
    sd = jump(fock_matrix(3, 6), ops, ModelKind.SD)
    assert_allclose(sd.entries, 3.0 * fock_matrix(2, 6).entries)


def test_jump_dimension_mismatch():
    with pytest.raises(InvalidParameter):
        jump(fock_matrix(1, 4), build_operators(5, 1.0), ModelKind.EP)


def test_repeated_ep_jumps_stay_bounded():
    p = make_distribution(StateSpec.thermal(3.0))
    rho = DensityMatrix.from_diagonal(p.p)
    ops = build_operators(p.trunc_dim, 1.0)
    assert_allclose(jump(rho, ops, ModelKind.EP).trace(), 1.0 - p.p[0], rtol=1e-12)
    for _ in range(10):
        rho = jump(rho, ops, ModelKind.EP)
        assert rho.trace() <= 1.0


def test_post_count_state_thermal():
    p = make_distribution(StateSpec.thermal(5.0))
    rho = DensityMatrix.from_diagonal(p.p)
    ops = build_operators(p.trunc_dim, 1.0)
    ep = post_count_state(rho, ops, ModelKind.EP)
    assert np.max(np.abs(ep.diagonal() - p.p)) < 1e-10
    sd = post_count_state(rho, ops, ModelKind.SD)
    assert_allclose(diagonal_mean(sd), 10.0, rtol=1e-6)


def test_post_count_state_fock_one_and_vacuum():
    ops = build_operators(4, 1.0)
    assert_allclose(post_count_state(fock_matrix(1, 4), ops, ModelKind.EP).entries,
                    fock_matrix(0, 4).entries)
    for model in BOTH:
        with pytest.raises(VacuumOnly):
            post_count_state(fock_matrix(0, 4), ops, model)


def test_mean_after_one_count():
    coherent = make_distribution(StateSpec.coherent(1.0))
    expected = 1.0 / (1.0 - math.exp(-1.0)) - 1.0
    assert_allclose(mean_after_one_count(coherent, ModelKind.EP), expected, rtol=1e-9)
    assert_allclose(mean_after_one_count(coherent, ModelKind.EP), 0.5819767, atol=1e-7)
    assert_allclose(mean_after_one_count(make_distribution(StateSpec.coherent(5.0)), ModelKind.SD),
                    5.0, rtol=1e-8)
    assert mean_after_one_count(make_distribution(StateSpec.fock(5)), ModelKind.EP) == 4.0
    assert mean_after_one_count(make_distribution(StateSpec.fock(5)), ModelKind.SD) == 4.0
    for model in BOTH:
        with pytest.raises(VacuumOnly):
            mean_after_one_count(make_distribution(StateSpec.fock(0)), model)


def test_mean_after_one_count_matches_post_count_state():
    p = make_distribution(StateSpec.negative_binomial(2.0, 3.0))
    rho = DensityMatrix.from_diagonal(p.p)
    ops = build_operators(p.trunc_dim, 1.0)
    for model in BOTH:
        assert_allclose(diagonal_mean(post_count_state(rho, ops, model)),
                        mean_after_one_count(p, model), rtol=1e-7)


@pytest.mark.parametrize("model", BOTH)
def test_no_count_evolve_identity_at_zero(model):
    rho = make_density_matrix(StateSpec.coherent(2.0))
    ops = build_operators(rho.trunc_dim, 1.0, omega=0.8)
    assert_allclose(no_count_evolve(rho, 0.0, ops, model).entries, rho.entries)


def test_no_count_evolve_fock_traces():
    ops = build_operators(6, 1.3)
    for tau in (0.2, 1.0, 4.0):
        ep = no_count_evolve(fock_matrix(3, 6), tau, ops, ModelKind.EP)
        sd = no_count_evolve(fock_matrix(3, 6), tau, ops, ModelKind.SD)
        assert_allclose(ep.trace(), math.exp(-1.3 * tau), rtol=1e-14)
        assert_allclose(sd.trace(), math.exp(-3.0 * 1.3 * tau), rtol=1e-14)


@pytest.mark.parametrize("model", BOTH)
def test_no_count_semigroup(model):
    rho = make_density_matrix(StateSpec.coherent(3.0))
    ops = build_operators(rho.trunc_dim, 0.9, omega=2.0)
    once = no_count_evolve(rho, 1.1, ops, model)
    twice = no_count_evolve(no_count_evolve(rho, 0.4, ops, model), 0.7, ops, model)
    assert np.max(np.abs(once.entries - twice.entries)) < 1e-12


@pytest.mark.parametrize("model", BOTH)
def test_no_count_evolve_keeps_pure_states_pure(model):
    rho = make_density_matrix(StateSpec.coherent(2.0))
    ops = build_operators(rho.trunc_dim, 1.0)
    evolved = no_count_evolve(rho, 1.5, ops, model).entries
    eigenvalues = np.linalg.eigvalsh(0.5 * (evolved + evolved.conj().T))
    assert eigenvalues[-2] < 1e-10


def test_no_count_probability():
    vacuum = make_distribution(StateSpec.fock(0))
    for model in BOTH:
        for tau in (0.0, 1.0, 30.0, math.inf):
            assert abs(no_count_probability(vacuum, tau, 1.0, model) - 1.0) <= 1e-15

    thermal = make_distribution(StateSpec.thermal(5.0))
    assert_allclose(no_count_probability(thermal, 1.0, 1.0, ModelKind.EP),
                    math.exp(-1.0) + (1.0 - math.exp(-1.0)) / 6.0, rtol=1e-13)
    assert_allclose(no_count_probability(thermal, 1.0, 1.0, ModelKind.EP), 0.4291925, atol=1e-7)
    geometric = (1.0 / 6.0) / (1.0 - 5.0 * math.exp(-1.0) / 6.0)
    assert_allclose(no_count_probability(thermal, 1.0, 1.0, ModelKind.SD), geometric, rtol=1e-11)
    for model in BOTH:
        assert no_count_probability(thermal, math.inf, 1.0, model) == thermal.p[0]
    with pytest.raises(InvalidParameter):
        no_count_probability(thermal, -1.0, 1.0, ModelKind.EP)


@pytest.mark.parametrize("model", BOTH)
def test_no_count_probability_is_evolved_trace(model):
    p = make_distribution(StateSpec.thermal(2.0))
    rho = DensityMatrix.from_diagonal(p.p)
    ops = build_operators(p.trunc_dim, 0.5)
    assert_allclose(no_count_evolve(rho, 2.0, ops, model).trace(),
                    no_count_probability(p, 2.0, 0.5, model), rtol=1e-12)


def test_no_count_evolve_pure():
    ops = build_operators(5, 1.0)
    vacuum = PureState.normalized([1, 0, 0, 0, 0])
    assert_allclose(no_count_evolve_pure(vacuum, 2.0, ops).amplitudes, vacuum.amplitudes)

    three = PureState.normalized([0, 0, 0, 1, 0])
    assert_allclose(no_count_evolve_pure(three, 2.0, ops).amplitudes, math.exp(-1.0) * three.amplitudes)

    half = PureState.normalized(np.array([1, 1, 0, 0, 0]) / math.sqrt(2.0))
    for tau in (0.3, 1.0, 5.0):
        assert_allclose(no_count_evolve_pure(half, tau, ops).norm_squared,
                        0.5 + 0.5 * math.exp(-tau), rtol=1e-14)


def test_pure_state_validation():
    with pytest.raises(InvalidParameter):
        PureState.normalized([1.0, 1.0])
    with pytest.raises(InvalidParameter):
        PureState(np.ones((2, 2)))
    with pytest.raises(InvalidParameter):
        no_count_evolve_pure(PureState.normalized([1.0, 0.0]), 1.0, build_operators(3, 1.0))


def test_trace_rate_identity():
    thermal = make_density_matrix(StateSpec.thermal(5.0), dim=200)
    assert trace_rate_identity_check(thermal, build_operators(200, 1.0), ModelKind.EP) < 1e-10
    assert trace_rate_identity_check(fock_matrix(3, 10), build_operators(10, 1.0), ModelKind.SD) < 1e-12
    for model in BOTH:
        assert trace_rate_identity_check(fock_matrix(0, 5), build_operators(5, 2.0, omega=1.0), model) == 0.0


def test_mean_and_q_of_post_count_fock():
    p = make_distribution(StateSpec.fock(4))
    rho = DensityMatrix.from_diagonal(p.p)
    ops = build_operators(p.trunc_dim, 1.0)
    after = post_count_state(rho, ops, ModelKind.SD).photon_statistics()
    assert mean_and_q(after) == (3.0, -1.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
