#!/usr/bin/env python3
"""
Monte Carlo sampling of photocount records (quantum-jump trajectories).

Features:
- Waiting-time sampling from the no-count survival function of the conditioned state
- Diagonal fast path, full density-matrix path for states with coherences
- Per-trajectory Philox streams keyed by splitmix64(base_seed, index)
- Batch runner with histogram merge, Wilson intervals and optional process pool
- Distance check of sampled jump times against the EPD marginals
"""

import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from errors import (InsufficientSamples, InvalidParameter, PhotocountError,
                    TruncationExhausted)
from fock_operators import (ModelKind, OperatorSet, build_operators, no_count_evolve,
                            post_count_state)
from photon_states import DensityMatrix, StateSpec, make_density_matrix, make_distribution
from settings import get_settings

logger = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(base_seed: int, index: int) -> int:
    """64-bit seed of trajectory `index`, decorrelated from its neighbours."""
    z = (base_seed + (index + 1) * _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trajectory_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(splitmix64(base_seed, index)))


@dataclass(frozen=True)
class CountRecord:
    jump_times: Tuple[float, ...]
    window: float
    model: ModelKind
    seed: int
    final_distribution: np.ndarray = field(default_factory=lambda: np.ones(1), compare=False)

    def __post_init__(self):
        times = tuple(self.jump_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidParameter("Jump times must be increasing")
        if times and (times[0] <= 0 or times[-1] >= self.window):
            raise InvalidParameter("Jump times must lie inside the window")
        object.__setattr__(self, "jump_times", times)

    @property
    def k(self) -> int:
        return len(self.jump_times)


@dataclass
class McSummary:
    counts_histogram: Dict[int, int]
    n_traj: int
    ci_level: float = 0.95
    mean_final_distribution: np.ndarray = field(default_factory=lambda: np.ones(1))

    def frequency(self, k: int) -> float:
        return self.counts_histogram.get(k, 0) / self.n_traj

    def standard_error(self, probability: float) -> float:
        return math.sqrt(max(probability * (1.0 - probability), 0.0) / self.n_traj)

    def confidence_interval(self, k: int) -> Tuple[float, float]:
        result = stats.binomtest(self.counts_histogram.get(k, 0), self.n_traj)
        interval = result.proportion_ci(confidence_level=self.ci_level, method="wilson")
        return float(interval.low), float(interval.high)

    def to_rows(self, closed_form: Optional[Callable[[int], float]] = None) -> List[Dict[str, object]]:
        """One row per k from 0 to the largest observed count."""
        rows = []
        for k in range(max(self.counts_histogram, default=0) + 1):
            low, high = self.confidence_interval(k)
            row = {
                "k": k,
                "count": self.counts_histogram.get(k, 0),
                "frequency": self.frequency(k),
                "ci_low": low,
                "ci_high": high,
            }
            if closed_form is not None:
                row["closed_form"] = closed_form(k)
            rows.append(row)
        return rows


@dataclass(frozen=True)
class EpdCheckResult:
    statistic: float
    n_conditioned: int
    bound: float
    per_coordinate: Tuple[float, ...]

    @property
    def passed(self) -> bool:
        return self.statistic < self.bound


class TrajectorySampler:
    """Samples count records for one (state, window, gamma, model) setting."""

    def __init__(self, spec: StateSpec, t: float, gamma: float, model: ModelKind,
                 omega: float = 0.0, tail_tol: Optional[float] = None):
        if not t >= 0:
            raise InvalidParameter(f"Observation time must be >= 0, got {t}")
        if not gamma > 0:
            raise InvalidParameter(f"gamma must be positive, got {gamma}")
        settings = get_settings()
        self.t = float(t)
        self.gamma = float(gamma)
        self.model = model
        self.edge_tol = settings.edge_tol
        self.xtol = settings.waiting_time_xtol

        spec = spec.validated()
        self.rho0 = make_density_matrix(spec, tail_tol)
        self.truncated = make_distribution(spec, tail_tol).tail_mass > 0.0
        self.p0 = self.rho0.diagonal()
        self.diagonal = self.rho0.is_diagonal() and omega == 0.0
        self.ops: Optional[OperatorSet] = None
        if not self.diagonal and self.rho0.trunc_dim >= 2:
            self.ops = build_operators(self.rho0.trunc_dim, gamma, omega)
        logger.debug("TrajectorySampler: dim=%d diagonal=%s model=%s",
                     self.rho0.trunc_dim, self.diagonal, model.name)

    def _check_edge(self, p: np.ndarray, jumps: int, index: int) -> None:
        # after k jumps the highest level still reachable is N - k
        top = p.size - 1 - jumps
        if self.truncated and top > 0 and p[top] > self.edge_tol:
            raise TruncationExhausted(
                f"Conditioned mass {p[top]:.3e} at truncation edge n={top} after {jumps} jumps", index)

    def sample(self, base_seed: int, index: int = 0) -> CountRecord:
        seed = splitmix64(base_seed, index)
        rng = np.random.Generator(np.random.Philox(seed))
        if self.diagonal or self.ops is None:
            times, final = self._sample_diagonal(rng, index)
        else:
            times, final = self._sample_matrix(rng, index)
        return CountRecord(tuple(times), self.t, self.model, seed, final)

    def _sample_diagonal(self, rng: np.random.Generator, index: int):
        p = self.p0.copy()
        p /= p.sum()
        n = np.arange(p.size, dtype=float)
        elapsed, times = 0.0, []
        while True:
            remaining = self.t - elapsed
            # composition: pick a photon number, then its exponential waiting time
            if self.model is ModelKind.EP:
                rate = 0.0 if rng.random() < p[0] else self.gamma
            else:
                level = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
                rate = min(level, p.size - 1) * self.gamma
            s = rng.exponential(1.0 / rate) if rate > 0 else math.inf
            if s >= remaining:
                if math.isfinite(remaining):
                    p = p * self._survival_factors(n, remaining)
                    p /= p.sum()
                return times, p
            elapsed += s
            times.append(elapsed)
            weights = p * self._survival_factors(n, s)
            if self.model is ModelKind.SD:
                weights = weights * n
            p = np.append(weights[1:], 0.0)
            p /= p.sum()
            self._check_edge(p, len(times), index)

    def _survival_factors(self, n: np.ndarray, s: float) -> np.ndarray:
        if self.model is ModelKind.SD:
            return np.exp(-self.gamma * n * s)
        factors = np.full(n.size, math.exp(-self.gamma * s))
        factors[0] = 1.0
        return factors

    def _waiting_time(self, rho: DensityMatrix, u: float, remaining: float) -> float:
        """Inverse of the survival function P_0(s) = Tr S_s rho at level u; inf if beyond the window."""
        p = rho.diagonal()
        if self.model is ModelKind.EP:
            if u <= p[0]:
                return math.inf
            s = -math.log((u - p[0]) / (1.0 - p[0])) / self.gamma
            return s if s < remaining else math.inf
        n = np.arange(p.size)

        def survival(s: float) -> float:
            return float(np.dot(p, np.exp(-self.gamma * n * s))) - u

        upper = remaining if math.isfinite(remaining) else 1.0
        while not math.isfinite(remaining) and survival(upper) > 0 and upper < 1e6 / self.gamma:
            upper *= 2.0
        if survival(upper) > 0:
            return math.inf
        return optimize.brentq(survival, 0.0, upper, xtol=self.xtol)

    def _sample_matrix(self, rng: np.random.Generator, index: int):
        rho = self.rho0.normalized()
        elapsed, times = 0.0, []
        while True:
            remaining = self.t - elapsed
            s = self._waiting_time(rho, rng.random(), remaining)
            if math.isinf(s):
                if math.isfinite(remaining):
                    rho = no_count_evolve(rho, remaining, self.ops, self.model).normalized()
                return times, rho.diagonal()
            elapsed += s
            times.append(elapsed)
            rho = no_count_evolve(rho, s, self.ops, self.model)
            rho = post_count_state(rho.normalized(), self.ops, self.model)
            self._check_edge(rho.diagonal(), len(times), index)


def sample_record(spec: StateSpec, t: float, gamma: float, model: ModelKind,
                  seed: int) -> CountRecord:
    """One count record; the same seed always gives the same record."""
    return TrajectorySampler(spec, t, gamma, model).sample(seed, 0)


def _sample_chunk(sampler: TrajectorySampler, base_seed: int,
                  indices: Sequence[int]) -> Tuple[Counter, np.ndarray]:
    histogram = Counter()
    final_sum = np.zeros(sampler.rho0.trunc_dim)
    for index in indices:
        try:
            record = sampler.sample(base_seed, index)
        except PhotocountError as exc:
            exc.trajectory_index = index
            raise
        histogram[record.k] += 1
        final_sum[: record.final_distribution.size] += record.final_distribution
    return histogram, final_sum


class TrajectoryBatchRunner:
    """Runs many independent trajectories and merges their histograms."""

    def __init__(self, workers: Optional[int] = None, chunk_size: int = 2000):
        settings = get_settings()
        self.workers = workers or settings.workers
        self.chunk_size = chunk_size
        self.ci_level = settings.ci_level

    def run(self, sampler: TrajectorySampler, n_traj: int, base_seed: int) -> McSummary:
        if n_traj < 1:
            raise InvalidParameter(f"n_traj must be >= 1, got {n_traj}")
        chunks = [range(start, min(start + self.chunk_size, n_traj))
                  for start in range(0, n_traj, self.chunk_size)]
        logger.info("Sampling %d trajectories in %d chunks on %d worker(s)",
                    n_traj, len(chunks), self.workers)

        if self.workers > 1 and len(chunks) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                futures = [pool.submit(_sample_chunk, sampler, base_seed, chunk) for chunk in chunks]
                results = [future.result() for future in futures]
        else:
            results = [_sample_chunk(sampler, base_seed, chunk) for chunk in chunks]

        histogram = Counter()
        final_sum = np.zeros(sampler.rho0.trunc_dim)
        for chunk_histogram, chunk_final in results:
            histogram.update(chunk_histogram)
            final_sum += chunk_final
        return McSummary(dict(sorted(histogram.items())), n_traj, self.ci_level, final_sum / n_traj)

    def collect(self, sampler: TrajectorySampler, n_traj: int, base_seed: int) -> List[CountRecord]:
        records = []
        for index in range(n_traj):
            try:
                records.append(sampler.sample(base_seed, index))
            except PhotocountError as exc:
                exc.trajectory_index = index
                raise
        return records


def run_batch(spec: StateSpec, t: float, gamma: float, model: ModelKind, n_traj: int,
              base_seed: int, workers: Optional[int] = None,
              tail_tol: Optional[float] = None) -> McSummary:
    sampler = TrajectorySampler(spec, t, gamma, model, tail_tol=tail_tol)
    return TrajectoryBatchRunner(workers).run(sampler, n_traj, base_seed)


def ks_like_epd_check(spec: StateSpec, gamma: float, model: ModelKind, k: int,
                      n_traj: int, base_seed: int) -> EpdCheckResult:
    """Largest one-sample KS distance between sampled jump times and the EPD marginals.

    Records are taken over a long window and conditioned on exactly k jumps.
    EP: the gaps t_i - t_{i-1} are exponential with rate gamma.
    SD: t_i is distributed as the i-th order statistic of k exponentials.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    settings = get_settings()
    window = settings.long_window_gamma_t / gamma
    sampler = TrajectorySampler(spec, window, gamma, model)
    records = TrajectoryBatchRunner(workers=1).collect(sampler, n_traj, base_seed)
    samples = np.array([r.jump_times for r in records if r.k == k], dtype=float).reshape(-1, k)
    n_conditioned = samples.shape[0]
    if n_conditioned < settings.min_conditioned:
        raise InsufficientSamples(
            f"Only {n_conditioned} of {n_traj} records have exactly {k} jumps "
            f"(need {settings.min_conditioned})")

    distances = []
    if model is ModelKind.EP:
        gaps = np.diff(np.hstack([np.zeros((n_conditioned, 1)), samples]), axis=1)
        for i in range(k):
            distances.append(stats.kstest(gaps[:, i], "expon", args=(0.0, 1.0 / gamma)).statistic)
    else:
        for i in range(k):
            marginal = stats.beta(i + 1, k - i)
            distances.append(stats.kstest(
                samples[:, i], lambda x, m=marginal: m.cdf(-np.expm1(-gamma * np.asarray(x)))).statistic)
    statistic = float(max(distances))
    bound = 4.0 / math.sqrt(n_conditioned)
    logger.debug("ks_like_epd_check %s k=%d: D=%.4f bound=%.4f n=%d",
                 model.name, k, statistic, bound, n_conditioned)
    return EpdCheckResult(statistic, n_conditioned, bound, tuple(float(d) for d in distances))
