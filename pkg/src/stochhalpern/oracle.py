"""Stochastic operator oracles and statistical certificates for them.

An oracle returns ``F_hat(u, z)`` where the realization ``z`` is identified by
an explicit 64-bit seed.  Evaluating several points under the same seed uses
the same ``z`` for all of them, which is what two-point variance reduction
needs.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import SeedStream, standard_normal, uniform_index

__all__ = [
    "ContractViolation",
    "UnsupportedCheck",
    "DegenerateInput",
    "OracleSpec",
    "StochasticOracle",
    "GaussianOracle",
    "FiniteSumOracle",
    "UnbiasedReport",
    "LipschitzReport",
    "as_point",
    "check_unbiased",
    "check_ms_lipschitz",
    "empirical_variance",
]

# Rows of noise generated per chunk are capped so a chunk holds ~2**20 floats.
_CHUNK_FLOATS = 1 << 20


class ContractViolation(ValueError):
    """Input does not satisfy an oracle precondition (e.g. wrong dimension)."""


class UnsupportedCheck(RuntimeError):
    """A check needs the true operator but the oracle does not expose one."""


class DegenerateInput(ValueError):
    pass


def as_point(u, dim: int | None = None) -> np.ndarray:
    """Validate and copy ``u`` into a finite float vector."""
    arr = np.array(u, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ContractViolation(f"a point must be a non-empty vector, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise ContractViolation(f"point has dimension {arr.size}, oracle expects {dim}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("point has non-finite entries")
    return arr


@dataclass(frozen=True)
class OracleSpec:
    """Declared noise level ``sigma`` and mean-square Lipschitz constant."""

    sigma: float
    lipschitz: float
    dim: int

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.lipschitz > 0:
            raise ValueError(f"lipschitz must be > 0, got {self.lipschitz}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")


class StochasticOracle:
    """Base class for seeded stochastic oracles.

    Subclasses implement ``_evaluate(points, seeds)`` returning an array of
    shape ``(len(seeds), len(points), dim)``.  They may override ``_sum`` and
    ``_sum_diff`` with cheaper exact reductions.  The only mutable state is the
    query counter, which is guarded by a lock.
    """

    def __init__(self, spec: OracleSpec, mean_operator: Callable | None = None):
        self.spec = spec
        self._mean_operator = mean_operator
        self._lock = threading.Lock()
        self._queries = 0

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def queries(self) -> int:
        """Total number of single-point evaluations served so far."""
        return self._queries

    def reset_counter(self) -> None:
        with self._lock:
            self._queries = 0

    def _count(self, n: int) -> None:
        with self._lock:
            self._queries += int(n)

    @property
    def has_true_operator(self) -> bool:
        return self._mean_operator is not None

    def true_value(self, u) -> np.ndarray:
        """The expectation F(u); raises UnsupportedCheck if unknown."""
        if self._mean_operator is None:
            raise UnsupportedCheck(f"{type(self).__name__} has no true-operator reference")
        return np.asarray(self._mean_operator(as_point(u, self.dim)), dtype=np.float64)

    # -- to be provided by subclasses -------------------------------------------------

    def _evaluate(self, points: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _chunk_rows(self, m: int) -> int:
        return max(1, _CHUNK_FLOATS // (m * self.dim))

    def _sum(self, u: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        total = np.zeros(self.dim)
        step = self._chunk_rows(1)
        for start in range(0, seeds.size, step):
            total += self._evaluate(u[None, :], seeds[start:start + step])[:, 0, :].sum(axis=0)
        return total

    def _sum_diff(self, u: np.ndarray, v: np.ndarray, seeds: np.ndarray) -> np.ndarray:
        total = np.zeros(self.dim)
        pts = np.stack([u, v])
        step = self._chunk_rows(2)
        for start in range(0, seeds.size, step):
            out = self._evaluate(pts, seeds[start:start + step])
            total += (out[:, 0, :] - out[:, 1, :]).sum(axis=0)
        return total

    # -- public surface ---------------------------------------------------------------

    def _points(self, points) -> np.ndarray:
        if len(points) == 0:
            raise ContractViolation("at least one query point is required")
        return np.stack([as_point(p, self.dim) for p in points])

    def sample(self, points: Sequence, seed: int) -> list[np.ndarray]:
        """F_hat(p, z) for every p under the single realization ``seed``."""
        pts = self._points(points)
        seeds = np.array([int(seed)], dtype=np.uint64)
        out = self._evaluate(pts, seeds)[0]
        self._count(len(pts))
        return [row.copy() for row in out]

    def sample_batch(self, points: Sequence, seeds) -> np.ndarray:
        """Evaluate every point under every seed; shape (S, m, dim)."""
        pts = self._points(points)
        seeds = np.asarray(seeds, dtype=np.uint64).ravel()
        out = self._evaluate(pts, seeds)
        self._count(seeds.size * len(pts))
        return out

    def batch_sum(self, u, seeds) -> np.ndarray:
        """Sum of F_hat(u, z_i) over the given seeds (counts len(seeds))."""
        seeds = np.asarray(seeds, dtype=np.uint64).ravel()
        u = as_point(u, self.dim)
        total = self._sum(u, seeds)
        self._count(seeds.size)
        return total

    def batch_sum_diff(self, u, v, seeds) -> np.ndarray:
        """Sum of F_hat(u, z_i) - F_hat(v, z_i), same z_i at both points.

        Counts two queries per seed.
        """
        seeds = np.asarray(seeds, dtype=np.uint64).ravel()
        u = as_point(u, self.dim)
        v = as_point(v, self.dim)
        total = self._sum_diff(u, v, seeds)
        self._count(2 * seeds.size)
        return total


class GaussianOracle(StochasticOracle):
    """F_hat(u, z) = F(u) + (sigma / sqrt(d)) * xi(z) with xi standard normal.

    The per-coordinate scale makes the total second moment of the noise
    exactly ``sigma**2``.  Because the noise is additive, two-point
    differences under a shared seed are noise-free, and ``_sum_diff`` uses
    that identity directly.

    ``operator`` must accept an array of shape (..., d) and act on the last
    axis.
    """

    def __init__(self, operator: Callable, spec: OracleSpec):
        super().__init__(spec, mean_operator=operator)
        self.operator = operator
        self._scale = spec.sigma / math.sqrt(spec.dim)

    def _evaluate(self, points, seeds):
        clean = np.asarray(self.operator(points), dtype=np.float64)
        out = np.broadcast_to(clean, (seeds.size,) + clean.shape).copy()
        if self._scale > 0:
            noise = standard_normal(seeds, self.dim) * self._scale
            out += noise[:, None, :]
        return out

    def _sum(self, u, seeds):
        total = seeds.size * np.asarray(self.operator(u), dtype=np.float64)
        if self._scale > 0:
            noise = np.zeros(self.dim)
            step = self._chunk_rows(1)
            for start in range(0, seeds.size, step):
                noise += standard_normal(seeds[start:start + step], self.dim).sum(axis=0)
            total = total + self._scale * noise
        return total

    def _sum_diff(self, u, v, seeds):
        diff = np.asarray(self.operator(u), dtype=np.float64) - np.asarray(self.operator(v))
        return seeds.size * diff


class FiniteSumOracle(StochasticOracle):
    """Index sampling for F = sum_i f_i: F_hat(u, i) = n * f_i(u).

    ``component(indices, points)`` returns f_i evaluated at every point for
    every index, shape (len(indices), len(points), d).  The index for a seed
    is uniform on ``range(n)``.
    """

    def __init__(self, component: Callable, n: int, spec: OracleSpec,
                 mean_operator: Callable | None = None):
        if n < 1:
            raise ValueError("a finite-sum oracle needs at least one component")
        self.component = component
        self.n = int(n)
        if mean_operator is None:
            mean_operator = self._full_sum
        super().__init__(spec, mean_operator=mean_operator)

    def _full_sum(self, u):
        u = np.asarray(u, dtype=np.float64)
        return self.component(np.arange(self.n), u[None, :])[:, 0, :].sum(axis=0)

    def indices(self, seeds) -> np.ndarray:
        return uniform_index(np.asarray(seeds, dtype=np.uint64), self.n)

    def _evaluate(self, points, seeds):
        return self.n * np.asarray(self.component(self.indices(seeds), points), dtype=np.float64)


# -- statistical certificates ------------------------------------------------------


@dataclass(frozen=True)
class UnbiasedReport:
    empirical_mean: np.ndarray
    error: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class LipschitzReport:
    ratio: float
    slack: float
    passed: bool


def _seeds(seed: int, n: int) -> np.ndarray:
    return SeedStream.from_seed(seed).take(n)[0]


def check_unbiased(oracle: StochasticOracle, point, reps: int, tol: float,
                   seed: int = 0) -> UnbiasedReport:
    """Compare the mean of ``reps`` samples with F(point).

    Passes iff the error is at most ``tol + 3 * std / sqrt(reps)``, where std
    is the root of the empirical total variance.
    """
    if reps < 100:
        raise ValueError(f"reps must be >= 100, got {reps}")
    truth = oracle.true_value(point)
    samples = oracle.sample_batch([point], _seeds(seed, reps))[:, 0, :]
    mean = samples.mean(axis=0)
    std = math.sqrt(float(np.mean(np.sum((samples - mean) ** 2, axis=1))))
    err = float(np.linalg.norm(mean - truth))
    threshold = tol + 3.0 * std / math.sqrt(reps)
    return UnbiasedReport(empirical_mean=mean, error=err, threshold=threshold,
                          passed=err <= threshold)


def check_ms_lipschitz(oracle: StochasticOracle, u, v, reps: int,
                       seed: int = 0) -> LipschitzReport:
    """Ratio of E||F_hat(u,z) - F_hat(v,z)||^2 to L^2 ||u - v||^2."""
    if reps < 100:
        raise ValueError(f"reps must be >= 100, got {reps}")
    u = as_point(u, oracle.dim)
    v = as_point(v, oracle.dim)
    dist_sq = float(np.sum((u - v) ** 2))
    if dist_sq == 0.0:
        raise DegenerateInput("u and v coincide; the Lipschitz ratio is undefined")
    out = oracle.sample_batch([u, v], _seeds(seed, reps))
    msd = float(np.mean(np.sum((out[:, 0, :] - out[:, 1, :]) ** 2, axis=1)))
    ratio = msd / (oracle.spec.lipschitz ** 2 * dist_sq)
    slack = 5.0 / math.sqrt(reps)
    return LipschitzReport(ratio=ratio, slack=slack, passed=ratio <= 1.0 + slack)


def empirical_variance(oracle: StochasticOracle, point, reps: int, seed: int = 0) -> float:
    """Monte-Carlo estimate of E||F_hat(point, z) - F(point)||^2."""
    truth = oracle.true_value(point)
    samples = oracle.sample_batch([point], _seeds(seed, reps))[:, 0, :]
    return float(np.mean(np.sum((samples - truth) ** 2, axis=1)))
