"""Potential functions, rate fits, and oracle-complexity scaling measurements."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._rng import SeedStream
from .estimators import InvalidParameter, ceil_int, page_init, page_schedule, page_step
from .oracle import OracleSpec, StochasticOracle
from .solvers.trace import DivergenceError, RunTrace

__all__ = [
    "InsufficientData",
    "ScalingFailure",
    "ScalingReport",
    "RunCell",
    "potential_cocoercive",
    "potential_monotone",
    "fit_rate_exponent",
    "fit_loglog",
    "measure_query_scaling",
    "cell_seed",
    "VarianceCheckpoint",
    "halpern_path",
    "estimator_variance_profile",
]

MIN_FIT_POINTS = 20


class InsufficientData(ValueError):
    pass


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def potential_cocoercive(k: int, u_k, u0, F_uk, L: float) -> float:
    """C_k = k(k+1)/(2L) ||F(u_k)||^2 + (k+1) <F(u_k), u_k - u0>."""
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    F = _vec(F_uk)
    return float(k * (k + 1) / (2.0 * L) * (F @ F) + (k + 1) * (F @ (_vec(u_k) - _vec(u0))))


def potential_monotone(k: int, u_k, v_km1, u0, F_uk, eta_k: float, L: float,
                       B0: float = 1.0) -> float:
    """V_k = A_k ||F(u_k)||^2 + B_k <F(u_k), u_k - u0> + c_k L^2 ||u_k - v_{k-1}||^2.

    B_k = (k+1) B0 and A_k = c_k = B0 (k+1)(k+2) eta_k / 2.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    if not B0 > 0:
        raise InvalidParameter(f"B0 must be > 0, got {B0}")
    F, u = _vec(F_uk), _vec(u_k)
    gap = u - _vec(v_km1)
    a = B0 * (k + 1) * (k + 2) * eta_k / 2.0
    return float(a * (F @ F) + (k + 1) * B0 * (F @ (u - _vec(u0))) + a * L**2 * (gap @ gap))


def fit_loglog(x, y) -> tuple[float, float]:
    """OLS slope of log y against log x, and its r^2."""
    lx, ly = np.log(_vec(x)), np.log(_vec(y))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def fit_rate_exponent(trace: RunTrace | Sequence[float], burn_in: int = 0) -> tuple[float, float]:
    """Slope of log ||F(u_k)|| against log k over k > burn_in.

    Accepts a RunTrace or a plain sequence whose i-th entry is the norm at k=i.
    Entries at k=0 and non-positive norms are dropped (their logarithm is undefined).
    """
    if isinstance(trace, RunTrace):
        ks = trace.ks().astype(float)
        norms = trace.op_norms()
    else:
        norms = _vec(trace)
        ks = np.arange(len(norms), dtype=float)
    keep = (ks > max(burn_in, 0)) & (norms > 0) & np.isfinite(norms)
    if keep.sum() < MIN_FIT_POINTS:
        raise InsufficientData(
            f"need at least {MIN_FIT_POINTS} usable points after burn-in, have {int(keep.sum())}")
    return fit_loglog(ks[keep], norms[keep])


@dataclass
class RunCell:
    eps: float
    replication: int
    seed: int
    queries: int
    final_norm: float
    status: str


@dataclass
class ScalingReport:
    """Mean query totals per eps and the fitted exponent of queries ~ (1/eps)^p."""

    eps_grid: list[float]
    queries: list[float]
    fitted_exponent: float
    r_squared: float
    cells: list[RunCell] = field(default_factory=list)
    failures: list[tuple[float, int, str]] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "replication", "seed", "queries", "final_norm", "status"])
            for c in self.cells:
                w.writerow([f"{c.eps:.17g}", c.replication, c.seed, c.queries,
                            f"{c.final_norm:.17g}", c.status])

    def summary(self) -> dict:
        return {"eps_grid": self.eps_grid, "mean_queries": self.queries,
                "fitted_exponent": self.fitted_exponent, "r_squared": self.r_squared,
                "replications": len(self.cells) // max(len(self.eps_grid), 1),
                "failures": [list(f) for f in self.failures]}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


class ScalingFailure(RuntimeError):
    """Some cells diverged; ``report`` holds the cells that completed."""

    def __init__(self, failures, report: ScalingReport):
        self.failures = failures
        self.report = report
        cells = ", ".join(f"(eps={e:g}, rep={r})" for e, r, _ in failures)
        super().__init__(f"{len(failures)} run(s) failed: {cells}")


def cell_seed(base_seed: int, eps_index: int, replication: int) -> int:
    """Independent per-cell seed, stable across runs and worker counts."""
    ss = np.random.SeedSequence([int(base_seed), eps_index, replication])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def measure_query_scaling(solver: Callable, problem, eps_grid, replications: int, *,
                          seed: int = 0, workers: int = 1,
                          min_span: float = 4.0) -> ScalingReport:
    """Run ``solver(problem, eps, seed) -> (u, trace)`` on every (eps, replication) cell.

    The exponent is the OLS slope of log(mean queries) against log(1/eps).
    Cells may run in a thread pool; results are merged in grid order so the
    report does not depend on ``workers``.  The grid must cover at least a
    factor ``min_span`` between its largest and smallest value.
    """
    grid = sorted((float(e) for e in eps_grid), reverse=True)
    if len(grid) < 3:
        raise InvalidParameter("eps_grid needs at least 3 points")
    if len(set(grid)) != len(grid) or min(grid) <= 0:
        raise InvalidParameter("eps_grid values must be distinct and positive")
    if grid[0] / grid[-1] < min_span * (1 - 1e-12):
        raise InvalidParameter(f"eps_grid must span at least a factor {min_span:g}")
    if replications < 5:
        raise InvalidParameter("need at least 5 replications")

    jobs = [(i, eps, r, cell_seed(seed, i, r)) for i, eps in enumerate(grid)
            for r in range(replications)]

    def run(job):
        _, eps, r, s = job
        try:
            _, trace = solver(problem, eps, s)
        except DivergenceError as err:
            return job, None, err
        return job, trace, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    cells, failures, first_err = [], [], None
    for (i, eps, r, s), trace, err in results:
        if err is not None:
            failures.append((eps, r, str(err)))
            first_err = first_err or err
            continue
        cells.append(RunCell(eps=eps, replication=r, seed=s, queries=trace.cumulative_queries,
                             final_norm=trace.final_norm, status=trace.status))

    means = []
    for eps in grid:
        q = [c.queries for c in cells if c.eps == eps]
        means.append(float(np.mean(q)) if q else math.nan)
    usable = [(e, q) for e, q in zip(grid, means) if not math.isnan(q)]
    if len(usable) >= 2:
        slope, r2 = fit_loglog([1.0 / e for e, _ in usable], [q for _, q in usable])
    else:
        slope, r2 = math.nan, math.nan
    report = ScalingReport(eps_grid=grid, queries=means, fitted_exponent=slope, r_squared=r2,
                           cells=cells, failures=failures)
    if failures:
        raise ScalingFailure(failures, report) from first_err
    return report


def halpern_path(operator: Callable, u0, steps: int, L: float) -> list[np.ndarray]:
    """Noiseless anchored iterates u_0..u_steps, used as a fixed path to replay."""
    u0 = _vec(u0)
    path, u = [u0.copy()], u0.copy()
    for k in range(1, steps + 1):
        u = u0 / (k + 1) + (k / (k + 1)) * (u - _vec(operator(u)) / L)
        path.append(u.copy())
    return path


@dataclass
class VarianceCheckpoint:
    k: int
    measured: float
    bound: float
    allowed: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.allowed


def estimator_variance_profile(oracle: StochasticOracle, spec: OracleSpec, eps: float, path,
                               reps: int, checkpoints=(1, 2, 4, 8, 16), *, seed: int = 0,
                               s1_scale: float = 1.0) -> list[VarianceCheckpoint]:
    """Monte-Carlo E||F_tilde(u_k) - F(u_k)||^2 of the PAGE estimator along ``path``.

    Each replication replays the same path with its own seed stream.  The
    bound is eps^2 / k and ``allowed`` adds the sampling slack 1 + 5/sqrt(reps).
    ``s1_scale`` shrinks the refresh batches, which only exists to build a
    deliberately broken schedule.
    """
    if reps < 2:
        raise InvalidParameter("need at least 2 replications")
    checkpoints = sorted(set(int(k) for k in checkpoints))
    if checkpoints[0] < 1 or checkpoints[-1] >= len(path):
        raise InvalidParameter("checkpoints must lie in 1..len(path)-1")
    truth = {k: oracle.true_value(path[k]) for k in checkpoints}
    sq = {k: np.empty(reps) for k in checkpoints}
    master = SeedStream.from_seed(seed)
    s1_0 = max(1, ceil_int(s1_scale * 8.0 * spec.sigma**2 / eps**2))
    for r in range(reps):
        state = page_init(path[0], s1_0, oracle, eps=eps, master_seed=master.spawn(r), spec=spec)
        for k in range(1, checkpoints[-1] + 1):
            dist_sq = float(np.sum((path[k] - path[k - 1]) ** 2))
            p, s1, s2 = page_schedule(k, spec, eps, dist_sq)
            sched = (p, max(1, ceil_int(s1 * s1_scale)), s2)
            est, _, state = page_step(state, path[k], oracle, schedule=sched)
            if k in sq:
                sq[k][r] = float(np.sum((est - truth[k]) ** 2))
    slack = 1.0 + 5.0 / math.sqrt(reps)
    return [VarianceCheckpoint(k=k, measured=float(sq[k].mean()), bound=eps**2 / k,
                               allowed=slack * eps**2 / k) for k in checkpoints]
