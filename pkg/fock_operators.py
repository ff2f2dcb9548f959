#!/usr/bin/env python3
"""
Truncated Fock-space operators and the count / no-count superoperators.

Two detector models share one code path:
- SD: jump J rho = gamma a rho a^dagger, no-count generator Y = -iH - gamma n / 2
- EP: jump J rho = E_- rho E_+, no-count generator Y = -iH - gamma E_+E_- / 2

The EP jump has no gamma prefactor. Wherever a count probability or rate is
formed, the EP jump is weighted by gamma (see jump_weight), which is what
makes Tr[w J rho + Y rho + rho Y^dagger] vanish for both models.

Truncation edge: E_+|N> = 0 and a^dagger|N> = 0, so probability leaves the
truncated space instead of wrapping around.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import InvalidParameter, VacuumOnly
from photon_states import DensityMatrix, PhotonStatistics, mean_and_q
from settings import get_settings

logger = logging.getLogger(__name__)


class ModelKind(Enum):
    SD = "sd"
    EP = "ep"

    @classmethod
    def parse(cls, name: str) -> "ModelKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidParameter(f"Unknown model '{name}' (choose sd or ep)")


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class OperatorSet:
    dim: int
    gamma: float
    omega: float
    a: np.ndarray
    a_dag: np.ndarray
    e_minus: np.ndarray
    e_plus: np.ndarray
    lam: np.ndarray
    lambda0: np.ndarray

    @property
    def number(self) -> np.ndarray:
        return np.arange(self.dim, dtype=float)


def build_operators(dim: int, gamma: float, omega: float = 0.0) -> OperatorSet:
    """Ladder, phase and vacuum-projector matrices on levels 0..dim-1."""
    if dim < 2:
        raise InvalidParameter(f"Operator dimension must be >= 2, got {dim}")
    if not gamma > 0:
        raise InvalidParameter(f"gamma must be positive, got {gamma}")
    n = np.arange(dim, dtype=float)
    a = np.diag(np.sqrt(n[1:]), k=1)
    e_minus = np.diag(np.ones(dim - 1), k=1)
    lambda0 = np.zeros((dim, dim))
    lambda0[0, 0] = 1.0
    return OperatorSet(
        dim=dim,
        gamma=float(gamma),
        omega=float(omega),
        a=_frozen(a),
        a_dag=_frozen(a.T.copy()),
        e_minus=_frozen(e_minus),
        e_plus=_frozen(e_minus.T.copy()),
        lam=_frozen(np.eye(dim) - lambda0),
        lambda0=_frozen(lambda0),
    )


@dataclass(frozen=True)
class PureState:
    """State vector in the truncated Fock basis; norm may drop below 1 after conditioning."""

    amplitudes: np.ndarray

    def __post_init__(self):
        psi = np.array(self.amplitudes, dtype=complex)
        if psi.ndim != 1:
            raise InvalidParameter("Pure state amplitudes must be a vector")
        if self.norm_squared_of(psi) > 1.0 + 1e-12:
            raise InvalidParameter("Pure state norm exceeds 1")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)

    @staticmethod
    def norm_squared_of(psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, psi)))

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        psi = np.asarray(amplitudes, dtype=complex)
        if abs(cls.norm_squared_of(psi) - 1.0) > 1e-12:
            raise InvalidParameter("Pure state must be normalized at construction")
        return cls(psi)

    @property
    def norm_squared(self) -> float:
        return self.norm_squared_of(self.amplitudes)


def _check_dim(rho: DensityMatrix, ops: OperatorSet) -> np.ndarray:
    if rho.trunc_dim != ops.dim:
        raise InvalidParameter(f"State dimension {rho.trunc_dim} does not match operators ({ops.dim})")
    return rho.entries


def jump_weight(ops: OperatorSet, model: ModelKind) -> float:
    """Factor turning jump() into the rate-weighted count map (gamma for EP, 1 for SD)."""
    return ops.gamma if model is ModelKind.EP else 1.0


def rate_operator(ops: OperatorSet, model: ModelKind) -> np.ndarray:
    if model is ModelKind.SD:
        return ops.gamma * np.diag(ops.number)
    return ops.gamma * (ops.e_plus @ ops.e_minus)


def jump_matrix(r: np.ndarray, ops: OperatorSet, model: ModelKind) -> np.ndarray:
    if model is ModelKind.SD:
        return ops.gamma * (ops.a @ r @ ops.a_dag)
    return ops.e_minus @ r @ ops.e_plus


def jump(rho: DensityMatrix, ops: OperatorSet, model: ModelKind) -> DensityMatrix:
    """One-count map: gamma a rho a^dagger (SD) or E_- rho E_+ (EP), unnormalized."""
    return DensityMatrix(jump_matrix(_check_dim(rho, ops), ops, model))


def post_count_state(rho: DensityMatrix, ops: OperatorSet, model: ModelKind) -> DensityMatrix:
    """State just after one count, J rho / Tr[J rho]."""
    counted = jump(rho, ops, model)
    trace = counted.trace()
    if trace <= get_settings().vacuum_tol:
        raise VacuumOnly(f"{model.name} jump trace {trace:.3e}: no photon left to count")
    return DensityMatrix(counted.entries / trace)


def mean_after_one_count(p: PhotonStatistics, model: ModelKind) -> float:
    """Mean photon number right after one count, from the statistics alone."""
    nbar, q = mean_and_q(p)
    tol = get_settings().vacuum_tol
    if model is ModelKind.SD:
        if nbar <= tol:
            raise VacuumOnly("SD post-count mean undefined for <n> = 0")
        return nbar + q
    not_vacuum = 1.0 - float(p.p[0])
    if not_vacuum <= tol:
        raise VacuumOnly("EP post-count mean undefined for the vacuum")
    return nbar / not_vacuum - 1.0


def no_count_propagator(tau: float, ops: OperatorSet, model: ModelKind) -> np.ndarray:
    """Diagonal of e^{Y tau}; both models give a diagonal operator."""
    if tau < 0:
        raise InvalidParameter(f"Time interval must be >= 0, got {tau}")
    n = ops.number
    phase = np.exp(-1j * ops.omega * n * tau)
    if model is ModelKind.SD:
        return phase * np.exp(-0.5 * ops.gamma * n * tau)
    # e^{alpha Lambda} = Lambda_0 + e^alpha Lambda
    damping = np.full(ops.dim, math.exp(-0.5 * ops.gamma * tau))
    damping[0] = 1.0
    return phase * damping


def conjugate_diagonal(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    return b[:, None] * r * b.conj()[None, :]


def no_count_evolve(rho: DensityMatrix, tau: float, ops: OperatorSet, model: ModelKind) -> DensityMatrix:
    """S_tau rho = e^{Y tau} rho e^{Y^dagger tau}; its trace is the no-count probability."""
    r = _check_dim(rho, ops)
    return DensityMatrix(conjugate_diagonal(r, no_count_propagator(tau, ops, model)))


def free_evolve(rho: DensityMatrix, tau: float, ops: OperatorSet) -> DensityMatrix:
    """U_tau rho = e^{-iH tau} rho e^{iH tau} with H = omega n."""
    r = _check_dim(rho, ops)
    return DensityMatrix(conjugate_diagonal(r, np.exp(-1j * ops.omega * ops.number * tau)))


def no_count_probability(p: PhotonStatistics, tau: float, gamma: float, model: ModelKind) -> float:
    """Probability of no count during tau."""
    if tau < 0:
        raise InvalidParameter(f"Time interval must be >= 0, got {tau}")
    p0 = float(p.p[0])
    if math.isinf(tau):
        return p0
    if model is ModelKind.EP:
        decay = math.exp(-gamma * tau)
        return decay + p0 * (1.0 - decay)
    return math.fsum(p.p * np.exp(-gamma * tau * p.support))


def no_count_evolve_pure(psi: PureState, tau: float, ops: OperatorSet) -> PureState:
    """EP conditioned evolution <0|psi>|0> + e^{-gamma tau/2} e^{-iH tau} Lambda |psi>."""
    if psi.amplitudes.size != ops.dim:
        raise InvalidParameter(f"State dimension {psi.amplitudes.size} does not match operators ({ops.dim})")
    return PureState(no_count_propagator(tau, ops, ModelKind.EP) * psi.amplitudes)


def trace_rate_identity_check(rho: DensityMatrix, ops: OperatorSet, model: ModelKind) -> float:
    """|Tr[w J rho + Y rho + rho Y^dagger]|, zero when the no-count generator conserves probability."""
    r = _check_dim(rho, ops)
    y = -1j * ops.omega * np.diag(ops.number) - 0.5 * rate_operator(ops, model)
    counted = jump_weight(ops, model) * jump(rho, ops, model).entries
    return float(abs(np.trace(counted + y @ r + r @ y.conj().T)))
