#!/usr/bin/env python3
"""
Cross-module invariant battery behind `photocount_cli.py check`.

Each check is small enough to finish in seconds and reports one PASS/FAIL
line. The battery covers the SD detector assumptions (bounded interaction
rate, normalization, semigroup composition, ideality) and the agreement of
closed forms with numerical oracles.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import PhotocountError
from fock_operators import (ModelKind, build_operators, jump, mean_after_one_count,
                            no_count_evolve, trace_rate_identity_check)
from master_equation import (lindblad_integrate, lindblad_mean_trajectory, mean_gap,
                             pn_negbinomial_forms, preselect_distribution,
                             vacuum_probability_laplace)
from photocount_statistics import (brute_force_prob_counts, count_distribution,
                                   count_operator_action, prob_counts)
from photon_states import (DensityMatrix, PhotonStatistics, StateSpec,
                           make_density_matrix, make_distribution)
from settings import get_settings

logger = logging.getLogger(__name__)

BOTH_MODELS = (ModelKind.SD, ModelKind.EP)
REFERENCE_STATES = (StateSpec.fock(5), StateSpec.coherent(5.0), StateSpec.thermal(5.0))
LINDBLAD_STATES = REFERENCE_STATES + (StateSpec.negative_binomial(2.0, 3.0), StateSpec.binomial(5, 2.0))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


class InvariantChecker:
    """Named invariant checks; `truncation` cuts the reference thermal state to that many levels."""

    def __init__(self, truncation: Optional[int] = None, seed: int = 2024):
        self.truncation = truncation
        self.seed = seed
        self.checks: Dict[str, Tuple[str, Callable[[], Tuple[bool, str]]]] = {
            "boundedness": ("EP jump traces stay <= 1, SD jump rate grows with <n>", self.check_boundedness),
            "trace_rate_identity": ("Tr[wJ rho + Y rho + rho Y^dag] = 0", self.check_trace_rate_identity),
            "normalization": ("sum_k P(k,t) = 1 for both models", self.check_normalization),
            "asymptotic_counts": ("P(k, gamma t = 50) -> p_k", self.check_asymptotic_counts),
            "fock_poissonian": ("EP Fock counts are Poissonian below m", self.check_fock_poissonian),
            "post_count_means": ("thermal one-count means: EP nbar, SD 2 nbar", self.check_post_count_means),
            "semigroup": ("P(k, t1 + t2) from composed count operators (EP)", self.check_semigroup),
            "ideality": ("no-count evolution keeps pure states pure, vacuum gives no counts", self.check_ideality),
            "brute_force": ("closed-form P(k,t) vs nested quadrature", self.check_brute_force),
            "analytic_vs_numeric": ("pre-selection p_n vs RK4 Lindblad", self.check_analytic_vs_numeric),
            "special_functions": ("Kummer, transformed Kummer and Laguerre forms agree", self.check_special_functions),
            "mean_gap": ("EP mean >= SD mean", self.check_mean_gap),
            "truncation_budget": ("reference thermal tail mass within budget", self.check_truncation_budget),
        }

    @property
    def names(self) -> List[str]:
        return list(self.checks)

    def describe(self) -> List[Tuple[str, str]]:
        return [(name, description) for name, (description, _) in self.checks.items()]

    def run(self, names: Optional[Sequence[str]] = None) -> List[CheckResult]:
        results = []
        for name in names or self.names:
            _, check = self.checks[name]
            try:
                passed, detail = check()
            except PhotocountError as exc:
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            logger.info("check %s: %s (%s)", name, "PASS" if passed else "FAIL", detail)
            results.append(CheckResult(name, passed, detail))
        return results

    def check_boundedness(self) -> Tuple[bool, str]:
        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for _ in range(50):
            dim = int(rng.integers(2, 201))
            if rng.random() < 0.5:
                weights = rng.random(dim) ** 4
                rho = DensityMatrix.from_diagonal(weights / weights.sum())
            else:
                vectors = rng.normal(size=(dim, 3)) + 1j * rng.normal(size=(dim, 3))
                mixed = vectors @ vectors.conj().T
                rho = DensityMatrix(mixed / np.real(np.trace(mixed)))
            ops = build_operators(dim, 1.0)
            for _ in range(10):
                rho = jump(rho, ops, ModelKind.EP)
                worst = max(worst, rho.trace())
        rates = []
        for nbar in (1.0, 10.0, 100.0):
            p = make_distribution(StateSpec.thermal(nbar), dim=400)
            ops = build_operators(p.trunc_dim, 1.0)
            rates.append(jump(DensityMatrix.from_diagonal(p.p), ops, ModelKind.SD).trace())
        increasing = all(b > a for a, b in zip(rates, rates[1:]))
        return worst <= 1.0 + 1e-12 and increasing, f"max EP trace {worst:.3g}, SD rates {rates[0]:.3g}..{rates[-1]:.3g}"

    def check_trace_rate_identity(self) -> Tuple[bool, str]:
        rho = make_density_matrix(StateSpec.coherent(2.0))
        ops = build_operators(rho.trunc_dim, 0.7, omega=1.3)
        worst = max(trace_rate_identity_check(rho, ops, model) for model in BOTH_MODELS)
        return worst < 1e-12, f"max residual {worst:.2e}"

    def check_normalization(self) -> Tuple[bool, str]:
        worst = 0.0
        for spec in REFERENCE_STATES:
            p = make_distribution(spec)
            for model in BOTH_MODELS:
                for gamma_t in (0.1, 1.0, 5.0, 20.0):
                    dist = count_distribution(p, gamma_t, 1.0, model)
                    worst = max(worst, abs(dist.deficit))
        return worst < 1e-9, f"max deficit {worst:.2e}"

    def check_asymptotic_counts(self) -> Tuple[bool, str]:
        worst = 0.0
        for spec in REFERENCE_STATES:
            p = make_distribution(spec)
            for model in BOTH_MODELS:
                for k in range(11):
                    p_k = float(p.p[k]) if k < p.trunc_dim else 0.0
                    worst = max(worst, abs(prob_counts(p, k, 50.0, 1.0, model) - p_k))
        return worst < 1e-6, f"max |P(k,50) - p_k| {worst:.2e}"

    def check_fock_poissonian(self) -> Tuple[bool, str]:
        p = make_distribution(StateSpec.fock(5))
        worst = 0.0
        for gamma_t in (0.1, 1.0, 5.0):
            for k in range(5):
                expected = math.exp(-gamma_t) * gamma_t ** k / math.factorial(k)
                worst = max(worst, abs(prob_counts(p, k, gamma_t, 1.0, ModelKind.EP) - expected) / expected)
        return worst < 1e-13, f"max relative error {worst:.2e}"

    def check_post_count_means(self) -> Tuple[bool, str]:
        worst_ep = worst_sd = 0.0
        for nbar in (0.5, 1.0, 5.0, 10.0):
            p = make_distribution(StateSpec.thermal(nbar))
            worst_ep = max(worst_ep, abs(mean_after_one_count(p, ModelKind.EP) - nbar))
            worst_sd = max(worst_sd, abs(mean_after_one_count(p, ModelKind.SD) - 2.0 * nbar))
        return worst_ep < 1e-9 and worst_sd < 1e-6, f"EP {worst_ep:.2e}, SD {worst_sd:.2e}"

    def check_semigroup(self) -> Tuple[bool, str]:
        rho = make_density_matrix(StateSpec.coherent(1.0))
        ops = build_operators(rho.trunc_dim, 1.0)
        p = rho.photon_statistics()
        t1, t2 = 0.4, 0.7
        worst = 0.0
        for k in range(3):
            composed = 0.0
            for k1 in range(k + 1):
                first = count_operator_action(rho, k1, t1, ops, ModelKind.EP)
                composed += count_operator_action(first, k - k1, t2, ops, ModelKind.EP).trace()
            worst = max(worst, abs(composed - prob_counts(p, k, t1 + t2, 1.0, ModelKind.EP)))
        return worst < 1e-7, f"max composition error {worst:.2e}"

    def check_ideality(self) -> Tuple[bool, str]:
        second = 0.0
        for spec in (StateSpec.coherent(2.0), StateSpec.fock(3), StateSpec.coherent_phase(0.6j)):
            rho = make_density_matrix(spec)
            ops = build_operators(rho.trunc_dim, 1.0, omega=0.8)
            for model in BOTH_MODELS:
                for tau in (0.3, 1.0, 3.0):
                    evolved = no_count_evolve(rho, tau, ops, model).normalized().entries
                    eigenvalues = np.linalg.eigvalsh(0.5 * (evolved + evolved.conj().T))
                    second = max(second, float(eigenvalues[-2]))
        vacuum = make_distribution(StateSpec.fock(0))
        silent = all(abs(prob_counts(vacuum, 0, t, 1.0, model) - 1.0) < 1e-15
                     for model in BOTH_MODELS for t in (0.5, 5.0))
        fock = make_distribution(StateSpec.fock(3))
        excess = max(prob_counts(fock, 4, 2.0, 1.0, model) for model in BOTH_MODELS)
        passed = second < 1e-10 and silent and excess == 0.0
        return passed, f"second eigenvalue {second:.1e}, vacuum silent={silent}, P(4 | Fock 3)={excess:.1e}"

    def check_brute_force(self) -> Tuple[bool, str]:
        rho = make_density_matrix(StateSpec.coherent(1.0), dim=12)
        ops = build_operators(rho.trunc_dim, 1.0)
        p = rho.photon_statistics()
        worst = 0.0
        for model in BOTH_MODELS:
            for gamma_t in (0.5, 1.0):
                for k in range(3):
                    brute = brute_force_prob_counts(rho, k, gamma_t, ops, model)
                    worst = max(worst, abs(brute - prob_counts(p, k, gamma_t, 1.0, model)))
        return worst < 1e-6, f"max difference {worst:.2e}"

    def check_analytic_vs_numeric(self) -> Tuple[bool, str]:
        taus = [0.0, 0.5, 1.0, 5.0]
        worst = 0.0
        for spec in LINDBLAD_STATES:
            rho = make_density_matrix(spec)
            p = make_distribution(spec)
            ops = build_operators(rho.trunc_dim, 1.0)
            states = lindblad_integrate(rho, taus, ops, ModelKind.EP)
            for tau, state in zip(taus[1:], states[1:]):
                analytic = preselect_distribution(p, tau, ModelKind.EP).p
                worst = max(worst, float(np.max(np.abs(state.diagonal() - analytic))))
        coherent = make_density_matrix(StateSpec.coherent(5.0))
        ops = build_operators(coherent.trunc_dim, 1.0)
        trajectory = lindblad_mean_trajectory(coherent, taus, ops, ModelKind.SD)
        sd_mean = float(np.max(np.abs(trajectory.values - 5.0 * np.exp(-trajectory.taus))))
        p = make_distribution(StateSpec.thermal(1.0))
        laplace = abs(vacuum_probability_laplace(p, 1.0) - preselect_distribution(p, 1.0).p[0])
        passed = worst < 1e-6 and sd_mean < 1e-6 and laplace < 1e-10
        return passed, f"max |dp_n| {worst:.2e}, SD mean {sd_mean:.1e}, vacuum forms {laplace:.1e}"

    def check_special_functions(self) -> Tuple[bool, str]:
        worst = 0.0
        for mu in (1.0, 2.0, 3.0):
            for n in (1, 5, 10):
                for tau in (0.5, 5.0, 10.0):
                    values = list(pn_negbinomial_forms(mu, 3.0, n, tau).values())
                    worst = max(worst, max(values) - min(values))
        return worst < 1e-10, f"max spread {worst:.2e}"

    def check_mean_gap(self) -> Tuple[bool, str]:
        lowest = math.inf
        for nbar in (1, 5, 10):
            for spec in (StateSpec.fock(nbar), StateSpec.coherent(float(nbar)), StateSpec.thermal(float(nbar))):
                for tau in (0.0, 0.5, 2.0, 6.0):
                    lowest = min(lowest, mean_gap(spec, tau))
        fock_one = max(abs(mean_gap(StateSpec.fock(1), tau)) for tau in (0.5, 2.0, 6.0))
        return lowest >= -1e-12 and fock_one < 1e-12, f"min gap {lowest:.2e}, Fock(1) gap {fock_one:.1e}"

    def check_truncation_budget(self) -> Tuple[bool, str]:
        budget = get_settings().truncation_budget
        p: PhotonStatistics = make_distribution(StateSpec.thermal(5.0))
        if self.truncation is not None:
            p = p.truncated(self.truncation)
        return p.tail_mass <= budget, f"dim {p.trunc_dim}: tail mass {p.tail_mass:.3e} (budget {budget:.0e})"
