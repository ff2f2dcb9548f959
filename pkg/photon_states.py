#!/usr/bin/env python3
"""
Initial field states for the photocount models.

Features:
- Declarative StateSpec for Fock, coherent, thermal, negative binomial,
  binomial, coherent phase and custom photon-number distributions
- Truncated photon statistics with explicit tail-mass bookkeeping
- Fock-basis density matrices (rank one for pure families, diagonal otherwise)
- Mean photon number, Mandel q and the partial sums A_k / Z_{k+1}
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from errors import InvalidParameter
from settings import get_settings
from specfun import log_factorials

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12


class StateFamily(Enum):
    FOCK = "fock"
    COHERENT = "coherent"
    THERMAL = "thermal"
    NEG_BINOMIAL = "negbinomial"
    BINOMIAL = "binomial"
    COHERENT_PHASE = "phase"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, name: str) -> "StateFamily":
        try:
            return cls(name.strip().lower())
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise InvalidParameter(f"Unknown state family '{name}' (choose from {choices})")


@dataclass(frozen=True)
class StateSpec:
    """One initial-state family plus its parameters."""

    family: StateFamily
    m: int = 0
    nbar: float = 0.0
    mu: float = 1.0
    M: int = 1
    z: complex = 0j
    probabilities: Tuple[float, ...] = ()

    @classmethod
    def fock(cls, m: int) -> "StateSpec":
        return cls(StateFamily.FOCK, m=m).validated()

    @classmethod
    def coherent(cls, nbar: float) -> "StateSpec":
        return cls(StateFamily.COHERENT, nbar=nbar).validated()

    @classmethod
    def thermal(cls, nbar: float) -> "StateSpec":
        return cls(StateFamily.THERMAL, nbar=nbar).validated()

    @classmethod
    def negative_binomial(cls, mu: float, nbar: float) -> "StateSpec":
        return cls(StateFamily.NEG_BINOMIAL, mu=mu, nbar=nbar).validated()

    @classmethod
    def binomial(cls, M: int, nbar: float) -> "StateSpec":
        return cls(StateFamily.BINOMIAL, M=M, nbar=nbar).validated()

    @classmethod
    def coherent_phase(cls, z: complex) -> "StateSpec":
        return cls(StateFamily.COHERENT_PHASE, z=complex(z)).validated()

    @classmethod
    def custom(cls, probabilities: Iterable[float]) -> "StateSpec":
        return cls(StateFamily.CUSTOM, probabilities=tuple(float(p) for p in probabilities)).validated()

    @classmethod
    def from_mapping(cls, data: Mapping) -> "StateSpec":
        """Build from a scenario mapping such as {"state": "thermal", "nbar": 5}."""
        family = StateFamily.parse(str(data.get("state", "")))
        builders = {
            StateFamily.FOCK: lambda: cls.fock(int(data["m"])),
            StateFamily.COHERENT: lambda: cls.coherent(float(data["nbar"])),
            StateFamily.THERMAL: lambda: cls.thermal(float(data["nbar"])),
            StateFamily.NEG_BINOMIAL: lambda: cls.negative_binomial(float(data["mu"]), float(data["nbar"])),
            StateFamily.BINOMIAL: lambda: cls.binomial(int(data["M"]), float(data["nbar"])),
            StateFamily.COHERENT_PHASE: lambda: cls.coherent_phase(complex(data["z"])),
            StateFamily.CUSTOM: lambda: cls.custom(data["p"]),
        }
        try:
            return builders[family]()
        except KeyError as missing:
            raise InvalidParameter(f"State '{family.value}' needs parameter {missing}")

    def validated(self) -> "StateSpec":
        f = self.family
        if f is StateFamily.FOCK and self.m < 0:
            raise InvalidParameter(f"Fock photon number must be >= 0, got {self.m}")
        if f in (StateFamily.COHERENT, StateFamily.THERMAL, StateFamily.NEG_BINOMIAL, StateFamily.BINOMIAL):
            if not self.nbar >= 0 or math.isinf(self.nbar):
                raise InvalidParameter(f"Mean photon number must be finite and >= 0, got {self.nbar}")
        if f is StateFamily.NEG_BINOMIAL and not self.mu > 0:
            raise InvalidParameter(f"Negative binomial needs mu > 0, got {self.mu}")
        if f is StateFamily.BINOMIAL:
            if self.M < 1:
                raise InvalidParameter(f"Binomial needs M >= 1, got {self.M}")
            if self.nbar > self.M:
                raise InvalidParameter(f"Binomial needs nbar <= M, got nbar={self.nbar} > M={self.M}")
        if f is StateFamily.COHERENT_PHASE and not abs(self.z) < 1:
            raise InvalidParameter(f"Coherent phase state needs |z| < 1, got |z|={abs(self.z)}")
        if f is StateFamily.CUSTOM:
            if not self.probabilities:
                raise InvalidParameter("Custom distribution is empty")
            for index, value in enumerate(self.probabilities):
                if not value >= 0:
                    raise InvalidParameter(f"Custom probability at index {index} is negative ({value})")
            total = math.fsum(self.probabilities)
            if abs(total - 1.0) > 1e-12:
                raise InvalidParameter(f"Custom probabilities sum to {total!r}, not 1")
        return self

    @property
    def is_pure(self) -> bool:
        return self.family in (StateFamily.FOCK, StateFamily.COHERENT, StateFamily.COHERENT_PHASE)

    def describe(self) -> Dict[str, object]:
        """Compact parameter dictionary used in CSV labels and logs."""
        f = self.family
        if f is StateFamily.FOCK:
            return {"state": f.value, "m": self.m}
        if f in (StateFamily.COHERENT, StateFamily.THERMAL):
            return {"state": f.value, "nbar": self.nbar}
        if f is StateFamily.NEG_BINOMIAL:
            return {"state": f.value, "mu": self.mu, "nbar": self.nbar}
        if f is StateFamily.BINOMIAL:
            return {"state": f.value, "M": self.M, "nbar": self.nbar}
        if f is StateFamily.COHERENT_PHASE:
            return {"state": f.value, "z": self.z}
        return {"state": f.value, "p": list(self.probabilities)}


def nominal_mean(spec: StateSpec) -> float:
    """Untruncated mean photon number of the family."""
    f = spec.family
    if f is StateFamily.FOCK:
        return float(spec.m)
    if f is StateFamily.COHERENT_PHASE:
        r2 = abs(spec.z) ** 2
        return r2 / (1.0 - r2)
    if f is StateFamily.CUSTOM:
        return math.fsum(n * p for n, p in enumerate(spec.probabilities))
    return float(spec.nbar)


@dataclass(frozen=True)
class PhotonStatistics:
    """Diagonal p_n, n = 0..N, plus the probability mass left beyond N."""

    p: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidParameter("Photon statistics must be a non-empty vector")
        negative = np.flatnonzero(p < -1e-15)
        if negative.size:
            index = int(negative[0])
            raise InvalidParameter(f"Probability at index {index} is negative ({p[index]})")
        p = np.clip(p, 0.0, None)
        if self.tail_mass < 0:
            raise InvalidParameter(f"tail_mass must be >= 0, got {self.tail_mass}")
        total = math.fsum(p) + self.tail_mass
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InvalidParameter(f"Probabilities plus tail mass sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_unnormalized(cls, weights: np.ndarray) -> "PhotonStatistics":
        weights = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = math.fsum(weights)
        if total <= 0:
            raise InvalidParameter("Cannot normalize a zero distribution")
        return cls(weights / total, 0.0)

    @property
    def trunc_dim(self) -> int:
        return int(self.p.size)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.p.size)

    def truncated(self, dim: int) -> "PhotonStatistics":
        """Keep levels below dim; the rest joins the tail mass."""
        if dim < 1:
            raise InvalidParameter(f"Truncation dimension must be >= 1, got {dim}")
        if dim >= self.p.size:
            return self.padded(dim)
        dropped = math.fsum(self.p[dim:])
        return PhotonStatistics(self.p[:dim].copy(), self.tail_mass + dropped)

    def padded(self, dim: int) -> "PhotonStatistics":
        if dim <= self.p.size:
            return self
        p = np.zeros(dim)
        p[: self.p.size] = self.p
        return PhotonStatistics(p, self.tail_mass)


def _family_log_pmf(spec: StateSpec):
    """Vectorized ln p_n for the infinite-support families."""
    f = spec.family
    if f is StateFamily.COHERENT:
        log_nbar = math.log(spec.nbar)
        return lambda n: n * log_nbar - spec.nbar - log_factorials(int(n[-1]))[n]
    if f is StateFamily.THERMAL:
        log_ratio = math.log(spec.nbar / (1.0 + spec.nbar))
        log_p0 = -math.log1p(spec.nbar)
        return lambda n: n * log_ratio + log_p0
    if f is StateFamily.COHERENT_PHASE:
        r2 = abs(spec.z) ** 2
        log_r2 = math.log(r2)
        log_p0 = math.log1p(-r2)
        return lambda n: n * log_r2 + log_p0
    if f is StateFamily.NEG_BINOMIAL:
        mu, nbar = spec.mu, spec.nbar
        log_p0 = -mu * math.log1p(nbar / mu)
        log_q = math.log(nbar / (nbar + mu))

        def log_pmf(n):
            j = np.arange(int(n[-1]))
            steps = np.log((mu + j) / (j + 1.0)) + log_q
            return log_p0 + np.concatenate(([0.0], np.cumsum(steps)))[n]

        return log_pmf
    raise InvalidParameter(f"No series form for family {f.value}")


def _truncate_infinite(spec: StateSpec, tail_tol: float, max_dim: int) -> PhotonStatistics:
    log_pmf = _family_log_pmf(spec)
    mean = nominal_mean(spec)
    n_max = max(32, int(mean + 10.0 * math.sqrt(mean + 1.0) + 10))
    while True:
        n_max = min(n_max, max_dim - 1)
        p = np.exp(log_pmf(np.arange(n_max + 1)))
        remaining = 1.0 - np.cumsum(p)
        hits = np.flatnonzero(remaining < tail_tol)
        for N in hits[:3]:
            kept = p[: N + 1]
            tail = 1.0 - math.fsum(kept)
            if tail < tail_tol:
                logger.debug("Truncated %s at N=%d (tail %.3e)", spec.family.value, N, tail)
                if tail < 0.0:
                    # log-space rounding pushed the kept mass above 1
                    return PhotonStatistics(kept / math.fsum(kept), 0.0)
                return PhotonStatistics(kept, tail)
        if n_max >= max_dim - 1:
            raise InvalidParameter(
                f"{spec.family.value} state needs more than {max_dim} levels for tail_tol={tail_tol}")
        n_max *= 2


def _binomial_pmf(M: int, nbar: float) -> np.ndarray:
    q = nbar / M
    if q == 0.0:
        p = np.zeros(M + 1)
        p[0] = 1.0
        return p
    if q == 1.0:
        p = np.zeros(M + 1)
        p[M] = 1.0
        return p
    n = np.arange(M + 1)
    table = log_factorials(M)
    log_p = table[M] - table[n] - table[M - n] + n * math.log(q) + (M - n) * math.log1p(-q)
    p = np.exp(log_p)
    return p / math.fsum(p)


def make_distribution(spec: StateSpec, tail_tol: Optional[float] = None,
                      dim: Optional[int] = None) -> PhotonStatistics:
    """Photon-number distribution of spec, truncated once the tail drops below tail_tol.

    If dim is given the result is padded or cut to exactly dim levels.
    """
    settings = get_settings()
    tail_tol = settings.tail_tol if tail_tol is None else tail_tol
    if not 0 < tail_tol < 1:
        raise InvalidParameter(f"tail_tol must lie in (0, 1), got {tail_tol}")
    spec = spec.validated()
    f = spec.family

    if f is StateFamily.FOCK:
        p = np.zeros(spec.m + 1)
        p[spec.m] = 1.0
        stats = PhotonStatistics(p)
    elif f is StateFamily.BINOMIAL:
        stats = PhotonStatistics(_binomial_pmf(spec.M, spec.nbar))
    elif f is StateFamily.CUSTOM:
        p = np.array(spec.probabilities, dtype=float)
        stats = PhotonStatistics(p, max(0.0, 1.0 - math.fsum(p)))
    elif f is StateFamily.NEG_BINOMIAL and spec.mu == 1.0:
        stats = make_distribution(StateSpec.thermal(spec.nbar), tail_tol)
    elif nominal_mean(spec) == 0.0:
        stats = PhotonStatistics(np.array([1.0]))
    else:
        stats = _truncate_infinite(spec, tail_tol, settings.max_dim)

    if dim is not None:
        stats = stats.truncated(dim)
    return stats


@dataclass(frozen=True)
class DensityMatrix:
    """Complex Fock-basis matrix; may be unnormalized mid-pipeline."""

    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise InvalidParameter(f"Density matrix must be square, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_pure(cls, amplitudes: np.ndarray) -> "DensityMatrix":
        c = np.asarray(amplitudes, dtype=complex)
        return cls(np.outer(c, c.conj()))

    @classmethod
    def from_diagonal(cls, p: np.ndarray) -> "DensityMatrix":
        return cls(np.diag(np.asarray(p, dtype=complex)))

    @property
    def trunc_dim(self) -> int:
        return int(self.entries.shape[0])

    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)))

    def diagonal(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.entries)), 0.0, None)

    def normalized(self) -> "DensityMatrix":
        trace = self.trace()
        if trace <= 0:
            raise InvalidParameter("Cannot normalize a density matrix with zero trace")
        return DensityMatrix(self.entries / trace)

    def is_diagonal(self, tol: float = 0.0) -> bool:
        off = self.entries - np.diag(np.diag(self.entries))
        return bool(np.max(np.abs(off), initial=0.0) <= tol)

    def photon_statistics(self) -> PhotonStatistics:
        """Diagonal as statistics; missing trace becomes tail mass."""
        p = self.diagonal()
        total = math.fsum(p)
        if total > 1.0:
            return PhotonStatistics(p / total, 0.0)
        return PhotonStatistics(p, 1.0 - total)

    def validate(self, trace_tol: float = 1e-10, hermitian_tol: float = 1e-12,
                 eig_tol: float = 1e-10) -> "DensityMatrix":
        rho = self.entries
        asym = np.max(np.abs(rho - rho.conj().T), initial=0.0)
        if asym > hermitian_tol:
            raise InvalidParameter(f"Density matrix is not Hermitian (deviation {asym:.3e})")
        if abs(self.trace() - 1.0) > trace_tol:
            raise InvalidParameter(f"Density matrix trace is {self.trace()!r}, not 1")
        lowest = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        if lowest < -eig_tol:
            raise InvalidParameter(f"Density matrix has negative eigenvalue {lowest:.3e}")
        return self


def make_density_matrix(spec: StateSpec, tail_tol: Optional[float] = None,
                        dim: Optional[int] = None) -> DensityMatrix:
    """Rank-one rho for Fock, coherent (real amplitude) and coherent phase states, diagonal otherwise."""
    stats = make_distribution(spec, tail_tol, dim)
    if spec.family is StateFamily.COHERENT_PHASE:
        n = stats.support
        amplitudes = math.sqrt(1.0 - abs(spec.z) ** 2) * np.power(complex(spec.z), n)
        return DensityMatrix.from_pure(amplitudes)
    if spec.family in (StateFamily.FOCK, StateFamily.COHERENT):
        return DensityMatrix.from_pure(np.sqrt(stats.p))
    return DensityMatrix.from_diagonal(stats.p)


def mean_and_q(p: PhotonStatistics) -> Tuple[float, float]:
    """Mean photon number and Mandel q = (variance - mean) / mean (0 for the vacuum)."""
    n = p.support
    nbar = math.fsum(n * p.p)
    if nbar == 0.0:
        return 0.0, 0.0
    variance = math.fsum((n - nbar) ** 2 * p.p)
    return nbar, (variance - nbar) / nbar


def partial_sums(p: PhotonStatistics, k: int) -> Tuple[float, float]:
    """A_k = sum_{n<=k} p_n and its exact complement Z_{k+1} = 1 - A_k."""
    if k < 0:
        raise InvalidParameter(f"partial_sums needs k >= 0, got {k}")
    a_k = math.fsum(p.p[: k + 1])
    return a_k, 1.0 - a_k
