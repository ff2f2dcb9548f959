#!/usr/bin/env python3
"""
Tests for the invariant battery behind `photocount_cli.py check`.
"""

import sys

import pytest

from invariant_checks import CheckResult, InvariantChecker


@pytest.mark.parametrize("name", ["normalization", "fock_poissonian", "post_count_means",
                                  "ideality", "special_functions", "mean_gap", "boundedness",
                                  "brute_force", "analytic_vs_numeric"])
def test_fast_checks_pass(name):
    [result] = InvariantChecker().run([name])
    assert isinstance(result, CheckResult)
    assert result.name == name
    assert result.passed, result.detail


def test_ideality_reports_second_eigenvalue():
    [result] = InvariantChecker().run(["ideality"])
    assert result.detail.startswith("second eigenvalue ")
    second = float(result.detail.split(",")[0].split()[-1])
    assert second < 1e-10


def test_boundedness_is_seeded():
    first = InvariantChecker(seed=5).run(["boundedness"])
    second = InvariantChecker(seed=5).run(["boundedness"])
    assert first == second
    assert first[0].passed


def test_truncation_budget():
    [result] = InvariantChecker().run(["truncation_budget"])
    assert result.passed
    [cut] = InvariantChecker(truncation=3).run(["truncation_budget"])
    assert not cut.passed
    assert "dim 3" in cut.detail


def test_describe_lists_every_check():
    checker = InvariantChecker()
    described = dict(checker.describe())
    assert list(described) == checker.names
    assert all(described.values())


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
