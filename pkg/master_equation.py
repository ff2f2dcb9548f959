#!/usr/bin/env python3
"""
Pre-selection dynamics: the field state when counts are made but not read.

Features:
- Closed-form diagonal p_n(tau) for both models in slow time tau = gamma t
- Negative binomial (Kummer and Laguerre forms), binomial and Poisson special cases
- Mean photon number, generating function and the EP-SD mean gap
- Poisson asymptotics with an explicit validity flag
- Fixed-step RK4 Lindblad integrator with step halving, used as an oracle
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from errors import (InconsistentForms, InvalidParameter, NonConvergent,
                    StepTooLarge)
from fock_operators import ModelKind, OperatorSet
from photon_states import (DensityMatrix, PhotonStatistics, StateFamily, StateSpec,
                           make_distribution, nominal_mean)
from settings import get_settings
from specfun import (SeriesControl, bessel_i, clamp_probability, kummer_m,
                     kummer_m_transformed, laguerre_assoc, log_factorial, phi_k,
                     poisson_weights)

logger = logging.getLogger(__name__)

FORM_AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class Trajectory1D:
    """A quantity sampled on a slow-time grid."""

    taus: np.ndarray
    values: np.ndarray
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        taus = np.array(self.taus, dtype=float)
        values = np.array(self.values, dtype=float)
        if taus.shape != values.shape or taus.ndim != 1:
            raise InvalidParameter("taus and values must be vectors of equal length")
        if np.any(np.diff(taus) <= 0):
            raise InvalidParameter("taus must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter(f"Non-finite values in trajectory {self.meta.get('label', '')}")
        taus.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", values)

    @property
    def quantity(self) -> str:
        return str(self.meta.get("quantity", "value"))

    def to_rows(self, columns: Sequence[str] = ()) -> List[Dict[str, object]]:
        """One row per grid point: the named meta fields, then tau and the value."""
        fixed = {name: self.meta[name] for name in columns}
        return [{**fixed, "tau": float(tau), self.quantity: float(value)}
                for tau, value in zip(self.taus, self.values)]


def _check_tau(tau: float) -> None:
    if not tau >= 0:
        raise InvalidParameter(f"tau must be >= 0, got {tau}")


def preselect_distribution(p0: PhotonStatistics, tau: float,
                           model: ModelKind = ModelKind.EP) -> PhotonStatistics:
    """Diagonal of the pre-selection state at slow time tau."""
    _check_tau(tau)
    p = p0.p
    dim = p0.trunc_dim
    if tau == 0.0:
        return p0
    if model is ModelKind.SD:
        # binomial thinning: each photon survives with e^{-tau}
        survival = math.exp(-tau)
        n = np.arange(dim)
        kernel = stats.binom.pmf(n[:, None], n[None, :], survival)
        evolved = kernel @ p
        evolved[0] = 0.0
        evolved[0] = max(0.0, 1.0 - p0.tail_mass - math.fsum(evolved))
        return PhotonStatistics(evolved, p0.tail_mass)

    if math.isinf(tau):
        evolved = np.zeros(dim)
    else:
        weights = poisson_weights(tau, dim - 1)
        evolved = np.array([0.0] + [math.fsum(weights[: dim - n] * p[n:]) for n in range(1, dim)])
    evolved[0] = max(0.0, 1.0 - p0.tail_mass - math.fsum(evolved))
    return PhotonStatistics(evolved, p0.tail_mass)


def preselect_pn(p0: PhotonStatistics, n: int, tau: float,
                 model: ModelKind = ModelKind.EP) -> float:
    """p_n(tau) of the pre-selection state."""
    _check_tau(tau)
    if n < 0:
        raise InvalidParameter(f"Photon number must be >= 0, got {n}")
    if n >= p0.trunc_dim:
        return 0.0
    if n == 0 or model is ModelKind.SD:
        return float(preselect_distribution(p0, tau, model).p[n])
    if math.isinf(tau):
        return 0.0
    weights = poisson_weights(tau, p0.trunc_dim - 1 - n)
    return math.fsum(weights * p0.p[n:])


def vacuum_probability_laplace(p0: PhotonStatistics, tau: float) -> float:
    """EP vacuum probability sum_k p_k(0) Phi_{k-1}(tau), with Phi_{-1} = 1."""
    _check_tau(tau)
    terms = [float(p0.p[0])]
    for k in range(1, p0.trunc_dim):
        if p0.p[k] > 0:
            terms.append(float(p0.p[k]) * phi_k(k - 1, tau))
    return clamp_probability(math.fsum(terms))


def _negbin_log_p0(mu: float, nbar0: float, n: int) -> float:
    return (math.lgamma(mu + n) - math.lgamma(mu) - log_factorial(n)
            + mu * math.log(mu) + n * math.log(nbar0) - (mu + n) * math.log(nbar0 + mu))


def pn_negbinomial_forms(mu: float, nbar0: float, n: int, tau: float,
                         control: Optional[SeriesControl] = None) -> Dict[str, float]:
    """Every closed form of the negative binomial p_n(tau), keyed by name."""
    if not mu > 0:
        raise InvalidParameter(f"mu must be positive, got {mu}")
    if nbar0 < 0:
        raise InvalidParameter(f"Initial mean must be >= 0, got {nbar0}")
    _check_tau(tau)
    if n < 1:
        raise InvalidParameter("Closed negative binomial forms cover n >= 1")
    if nbar0 == 0.0:
        return {"kummer": 0.0, "kummer_transformed": 0.0}
    y = nbar0 * tau / (nbar0 + mu)
    p_n0 = math.exp(_negbin_log_p0(mu, nbar0, n))
    forms = {
        "kummer": p_n0 * math.exp(-tau) * kummer_m(mu + n, n + 1, y, control),
        "kummer_transformed": (p_n0 * math.exp(-tau)
                               * kummer_m_transformed(mu + n, n + 1, y, control)),
    }
    if float(mu).is_integer():
        m = int(mu)
        prefactor = math.exp(mu * math.log(mu) + n * math.log(nbar0) - (mu + n) * math.log(nbar0 + mu))
        forms["laguerre"] = prefactor * math.exp(-mu * tau / (nbar0 + mu)) * laguerre_assoc(m - 1, n, -y)
    return forms


def pn_negbinomial(mu: float, nbar0: float, n: int, tau: float,
                   control: Optional[SeriesControl] = None) -> float:
    if n == 0:
        spec = StateSpec.negative_binomial(mu, nbar0)
        return preselect_pn(make_distribution(spec), 0, tau)
    forms = pn_negbinomial_forms(mu, nbar0, n, tau, control)
    values = list(forms.values())
    spread = max(values) - min(values)
    if spread > FORM_AGREEMENT_TOL:
        raise InconsistentForms(
            f"Negative binomial forms disagree by {spread:.3e} (mu={mu}, nbar0={nbar0}, n={n}, tau={tau}): {forms}")
    return clamp_probability(forms["kummer"])


def pn_binomial(M: int, nbar0: float, n: int, tau: float) -> float:
    if M < 1:
        raise InvalidParameter(f"M must be >= 1, got {M}")
    if not 0.0 <= nbar0 <= M:
        raise InvalidParameter(f"Binomial mean must lie in [0, {M}], got {nbar0}")
    if not 0 <= n <= M:
        raise InvalidParameter(f"Binomial photon number must lie in [0, {M}], got {n}")
    _check_tau(tau)
    if n == 0:
        return preselect_pn(make_distribution(StateSpec.binomial(M, nbar0)), 0, tau)
    if nbar0 == 0.0:
        return 0.0
    j = M - n
    if nbar0 == M:
        # Fock |M> limit
        return math.exp(-tau + j * math.log(tau) - log_factorial(j)) if tau > 0 else float(j == 0)
    q = nbar0 / M
    value = (q ** n * (1.0 - q) ** j * math.exp(-tau)
             * laguerre_assoc(j, n, nbar0 * tau / (nbar0 - M)))
    return clamp_probability(value)


def _log_bessel_term(nbar0: float, n: int, tau: float, control: Optional[SeriesControl]) -> float:
    z = 2.0 * math.sqrt(nbar0 * tau)
    return (-nbar0 - tau + 0.5 * n * math.log(nbar0 / tau)
            + math.log(bessel_i(n, z, control)))


def pn_poisson(nbar0: float, n: int, tau: float, control: Optional[SeriesControl] = None) -> float:
    """Poisson initial statistics: e^{-nbar0 - tau} (nbar0/tau)^{n/2} I_n(2 sqrt(nbar0 tau))."""
    _check_tau(tau)
    if n < 0:
        raise InvalidParameter(f"Photon number must be >= 0, got {n}")
    if n == 0:
        return preselect_pn(make_distribution(StateSpec.coherent(nbar0)), 0, tau)
    if nbar0 == 0.0:
        return 0.0
    if tau == 0.0:
        return math.exp(n * math.log(nbar0) - nbar0 - log_factorial(n))
    return math.exp(_log_bessel_term(nbar0, n, tau, control))


def pn_poisson_asymptotic(nbar0: float, n: int, tau: float) -> Tuple[float, bool]:
    """Large-tau Poisson form; the flag is False unless tau > nbar0 + 1/nbar0."""
    if not nbar0 > 0:
        raise InvalidParameter(f"Initial mean must be positive, got {nbar0}")
    if not tau > 0:
        raise InvalidParameter(f"tau must be positive, got {tau}")
    valid = tau > nbar0 + 1.0 / nbar0
    log_value = (0.5 * n * math.log(nbar0 / tau)
                 - 0.5 * math.log(4.0 * math.pi * math.sqrt(nbar0 * tau))
                 - (math.sqrt(nbar0) - math.sqrt(tau)) ** 2)
    return math.exp(log_value), valid


def mean_poisson_asymptotic(nbar0: float, tau: float) -> Tuple[float, bool]:
    if not nbar0 > 0:
        raise InvalidParameter(f"Initial mean must be positive, got {nbar0}")
    if not tau > 0:
        raise InvalidParameter(f"tau must be positive, got {tau}")
    valid = tau > nbar0 + 1.0 / nbar0
    log_value = (0.25 * math.log(nbar0) - 0.5 * math.log(4.0 * math.pi) - 0.75 * math.log(tau)
                 - (math.sqrt(nbar0) - math.sqrt(tau)) ** 2)
    return math.exp(log_value), valid


def _mean_poisson_bessel(nbar0: float, tau: float, control: Optional[SeriesControl] = None) -> float:
    control = control or SeriesControl.default()
    terms = []
    for n in range(1, control.max_terms):
        term = n * math.exp(_log_bessel_term(nbar0, n, tau, control))
        terms.append(term)
        if n > nbar0 and term <= control.rel_tol * math.fsum(terms):
            return math.fsum(terms)
    raise NonConvergent(f"Poisson mean series did not converge (nbar0={nbar0}, tau={tau})")


def mean_series(p0: PhotonStatistics, tau: float) -> float:
    """EP mean e^{-tau} sum_k p_k(0) sum_{n=1}^{k} n tau^{k-n}/(k-n)!."""
    _check_tau(tau)
    dim = p0.trunc_dim
    if math.isinf(tau):
        return 0.0
    # inner sum = k F(k-1) - tau F(k-2), F the Poisson(tau) CDF
    cdf = np.cumsum(poisson_weights(tau, dim))
    terms = []
    for k in range(1, dim):
        if p0.p[k] > 0:
            below = cdf[k - 2] if k >= 2 else 0.0
            terms.append(float(p0.p[k]) * (k * cdf[k - 1] - tau * below))
    return math.fsum(terms)


def mean_photons(spec: StateSpec, tau: float, model: ModelKind,
                 control: Optional[SeriesControl] = None) -> float:
    _check_tau(tau)
    spec = spec.validated()
    nbar0 = nominal_mean(spec)
    if model is ModelKind.SD:
        return nbar0 * math.exp(-tau)
    if nbar0 == 0.0 or tau == 0.0:
        return nbar0

    if spec.family is StateFamily.FOCK:
        m = spec.m
        log_tau = math.log(tau)
        return math.fsum(n * math.exp(-tau + (m - n) * log_tau - log_factorial(m - n))
                         for n in range(1, m + 1))
    if spec.family is StateFamily.THERMAL:
        return nbar0 * math.exp(-tau / (1.0 + nbar0))
    if spec.family is StateFamily.COHERENT:
        return _mean_poisson_bessel(nbar0, tau, control)
    return mean_series(make_distribution(spec), tau)


def mean_trajectory(spec: StateSpec, taus: Sequence[float], model: ModelKind,
                    normalized: bool = True) -> Trajectory1D:
    """Mean photon number on a slow-time grid, divided by nbar0 unless normalized is False."""
    spec = spec.validated()
    nbar0 = nominal_mean(spec)
    values = [mean_photons(spec, tau, model) for tau in taus]
    if normalized:
        values = [v / nbar0 if nbar0 > 0 else 0.0 for v in values]
    meta = {"state": spec.family.value, "nbar0": nbar0, "model": model.value,
            "quantity": "nbar_over_nbar0" if normalized else "nbar"}
    return Trajectory1D(np.asarray(taus, dtype=float), np.asarray(values), meta)


def generating_function(p0: PhotonStatistics, z: float, tau: float) -> float:
    """Reduced generating function sum_{n>=1} z^n p_n(tau) of the EP pre-selection state."""
    if not 0.0 <= z <= 1.0:
        raise InvalidParameter(f"z must lie in [0, 1], got {z}")
    evolved = preselect_distribution(p0, tau, ModelKind.EP)
    n = evolved.support[1:]
    return math.fsum(np.power(z, n) * evolved.p[1:])


def mean_from_generating_function(p0: PhotonStatistics, tau: float) -> float:
    """dG/dz at z = 1, i.e. sum_n n p_n(tau)."""
    evolved = preselect_distribution(p0, tau, ModelKind.EP)
    return math.fsum(evolved.support * evolved.p)


def mean_gap(spec: StateSpec, tau: float) -> float:
    """EP mean minus SD mean; never negative."""
    return mean_photons(spec, tau, ModelKind.EP) - mean_photons(spec, tau, ModelKind.SD)


def rate_of_mean_decay(p0: PhotonStatistics, tau: float, model: ModelKind) -> float:
    """-d nbar / d tau: the mean itself for SD, the non-vacuum probability for EP."""
    evolved = preselect_distribution(p0, tau, model)
    if model is ModelKind.SD:
        return math.fsum(evolved.support * evolved.p)
    return 1.0 - p0.tail_mass - float(evolved.p[0])


class _Generator:
    """Lindblad generator for one lowering jump L (L_{n-1,n} = c_n) and a diagonal H."""

    def __init__(self, jump: np.ndarray, energies: np.ndarray):
        self.coupling = np.diag(jump, k=1).astype(complex)
        loss = np.concatenate(([0.0], np.abs(self.coupling) ** 2))
        self.decay = -1j * (energies[:, None] - energies[None, :]) - 0.5 * (loss[:, None] + loss[None, :])

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = self.decay * rho
        c = self.coupling
        out[:-1, :-1] += c[:, None] * rho[1:, 1:] * c.conj()[None, :]
        return out


def _rk4_step(rho: np.ndarray, h: float, rhs: _Generator) -> np.ndarray:
    k1 = rhs(rho)
    k2 = rhs(rho + 0.5 * h * k1)
    k3 = rhs(rho + 0.5 * h * k2)
    k4 = rhs(rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_fixed(rho0: np.ndarray, taus: np.ndarray, h: float,
                     rhs: _Generator) -> List[np.ndarray]:
    states = [rho0]
    rho = rho0
    for start, stop in zip(taus, taus[1:]):
        steps = max(1, math.ceil((stop - start) / h - 1e-12))
        dt = (stop - start) / steps
        for _ in range(steps):
            rho = _rk4_step(rho, dt, rhs)
        states.append(rho)
    return states


def lindblad_integrate(rho0: DensityMatrix, tau_grid: Sequence[float], ops: OperatorSet,
                       model: ModelKind, initial_step: Optional[float] = None,
                       min_step: Optional[float] = None,
                       halving_tol: Optional[float] = None) -> List[DensityMatrix]:
    """RK4 solution of d rho/d tau = L rho L^dag - {L^dag L, rho}/2 with L = E_- (EP) or a (SD)."""
    settings = get_settings()
    h = initial_step or settings.initial_step
    h_min = min_step or settings.min_step
    tol = halving_tol or settings.halving_tol

    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or taus[0] != 0.0:
        raise InvalidParameter("tau_grid must start at 0")
    if np.any(np.diff(taus) <= 0):
        raise InvalidParameter("tau_grid must be strictly increasing")
    if rho0.trunc_dim != ops.dim:
        raise InvalidParameter(f"State dimension {rho0.trunc_dim} does not match operators ({ops.dim})")
    if taus.size == 1:
        return [rho0]

    jump = ops.e_minus if model is ModelKind.EP else ops.a
    rhs = _Generator(jump, (ops.omega / ops.gamma) * ops.number)
    r0 = np.asarray(rho0.entries, dtype=complex)

    coarse = _integrate_fixed(r0, taus, h, rhs)
    while True:
        if h / 2.0 < h_min:
            raise StepTooLarge(f"Step halving did not settle to {tol:.1e} above h_min={h_min}")
        fine = _integrate_fixed(r0, taus, h / 2.0, rhs)
        change = max(float(np.max(np.abs(np.real(np.diag(a)) - np.real(np.diag(b)))))
                     for a, b in zip(coarse, fine))
        logger.debug("lindblad_integrate: h=%.3g -> %.3g changes p_n by %.2e", h, h / 2.0, change)
        if change < tol:
            break
        coarse, h = fine, h / 2.0
    return [DensityMatrix(0.5 * (r + r.conj().T)) for r in fine]


def lindblad_mean_trajectory(rho0: DensityMatrix, tau_grid: Sequence[float], ops: OperatorSet,
                             model: ModelKind, meta: Optional[Dict[str, object]] = None) -> Trajectory1D:
    states = lindblad_integrate(rho0, tau_grid, ops, model)
    values = [float(ops.number @ rho.diagonal()) for rho in states]
    labels = {"model": model.value, "quantity": "nbar", **(meta or {})}
    return Trajectory1D(np.asarray(tau_grid, dtype=float), np.asarray(values), labels)
