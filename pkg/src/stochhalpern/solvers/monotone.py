"""Extrapolated Halpern iteration for Lipschitz monotone operators, and its restarts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._rng import SeedStream
from ..estimators import DEFAULT_S1_CAP, DEFAULT_S2_CAP, InvalidParameter, ceil_int
from ..oracle import OracleSpec
from ._common import check_common, diverged, known_dist0, resolve_dist0, start_point
from ._drivers import make_driver
from .trace import DivergenceError, RunTrace, ScheduleCollapse, TraceRecord

__all__ = [
    "MonotoneConfig",
    "SharpConfig",
    "MonotoneConstants",
    "eta_schedule",
    "eta_upper_bound",
    "monotone_constants",
    "e_halpern",
    "restarted_e_halpern",
]


def eta_upper_bound(L: float) -> float:
    """Largest admissible initial step, 1 / (3 sqrt(3) L)."""
    return 1.0 / (3.0 * math.sqrt(3.0) * L)


def eta_schedule(eta_prev: float, k: int, M: float) -> float:
    """eta_k from eta_{k-1}.

    eta_k = (1 - 1/(k+1)^2 - M eta^2) (k+1)^2 / ((1 - M eta^2) k (k+2)) * eta
    where eta = eta_{k-1}.  Requires M eta^2 < 1 - 1/(k+1)^2.
    """
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    m_eta2 = M * eta_prev * eta_prev
    if not m_eta2 < 1.0 - 1.0 / (k + 1) ** 2:
        raise ScheduleCollapse(
            f"M*eta^2 = {m_eta2:.6g} >= 1 - 1/(k+1)^2 at k={k}; eta0 is too large")
    return ((1.0 - 1.0 / (k + 1) ** 2 - m_eta2) * (k + 1) ** 2
            / ((1.0 - m_eta2) * k * (k + 2))) * eta_prev


@dataclass(frozen=True)
class MonotoneConstants:
    L: float
    eta0: float
    M: float
    eta_floor: float
    lambda1: float

    def lambda0(self, dist0: float) -> float:
        return 4.0 * (self.L**2 * self.eta0 * self.eta_floor + 1.0) * dist0**2 / self.eta_floor**2


def monotone_constants(L: float, eta0: float) -> MonotoneConstants:
    """M = 9 L^2, the step floor, and the rate constant Lambda_1."""
    if not L > 0:
        raise InvalidParameter(f"L must be > 0, got {L}")
    bound = eta_upper_bound(L)
    if not 0 < eta0 <= bound * (1 + 1e-12):
        raise InvalidParameter(
            f"eta0 must satisfy 0 < eta0 <= 1/(3*sqrt(3)*L) = {bound:.6g}, got {eta0}")
    M = 9.0 * L**2
    m_eta2 = M * eta0**2
    floor = eta0 * (1.0 - 2.0 * m_eta2) / (1.0 - m_eta2)
    lam1 = 5.0 * (1.0 + M * floor * eta0) / (M * floor**2)
    return MonotoneConstants(L=L, eta0=eta0, M=M, eta_floor=floor, lambda1=lam1)


@dataclass
class MonotoneConfig:
    """Parameters of the extrapolated iteration.

    ``eta0`` defaults to the largest admissible value 1/(3 sqrt(3) L).
    ``estimator`` selects PAGE (default), growing mini-batches, or single
    samples; the latter two exist for estimator comparisons.
    """

    eps: float
    eta0: float | None = None
    L: float | None = None
    dist0: float | None = None
    max_iters: int | None = None
    master_seed: int = 0
    constant_scale: float = 1.0
    budget: int | None = None
    estimator: str = "page"
    record_iterates: bool = False
    stop_on_estimate: bool = False
    s2_cap: int = DEFAULT_S2_CAP
    s1_cap: int = DEFAULT_S1_CAP

    def __post_init__(self):
        check_common(self.eps, self.L, self.constant_scale)
        if self.eta0 is not None and not self.eta0 > 0:
            raise InvalidParameter(f"eta0 must be > 0, got {self.eta0}")

    def iterations(self, consts: MonotoneConstants, dist0: float) -> int:
        if self.max_iters is not None:
            return int(self.max_iters)
        n = math.sqrt(consts.lambda0(dist0)) / (math.sqrt(consts.lambda1) * self.eps)
        return ceil_int(self.constant_scale * n)


@dataclass
class SharpConfig:
    """Parameters of the restarted scheme for mu-sharp operators.

    ``restart_rule`` is "scheduled" (fixed rounds of K inner iterations) or
    "estimate-halving", which restarts as soon as the norm of the running
    estimate halves relative to the start of the round and keeps going until
    ``budget`` or ``max_rounds`` is reached.  Under that rule each round targets
    ``eps`` itself and is capped by ``inner_max_iters`` rather than K; a round
    lasts at least ``min_round`` iterations so early estimator noise cannot
    trigger a restart on its own.  With ``carry_estimator`` the running
    estimate is moved to the new anchor by one recursive step instead of being
    rebuilt from scratch.
    """

    eps: float
    mu: float
    eta0: float | None = None
    L: float | None = None
    dist0: float | None = None
    master_seed: int = 0
    constant_scale: float = 1.0
    log_base: float = 2.0
    budget: int | None = None
    restart_rule: str = "scheduled"
    max_rounds: int | None = None
    inner_max_iters: int | None = None
    min_round: int = 1
    carry_estimator: bool = True
    estimator: str = "page"
    record_iterates: bool = False
    s2_cap: int = DEFAULT_S2_CAP
    s1_cap: int = DEFAULT_S1_CAP

    def __post_init__(self):
        check_common(self.eps, self.L, self.constant_scale)
        if not self.mu > 0:
            raise InvalidParameter(f"mu must be > 0, got {self.mu}")
        if not self.log_base > 1:
            raise InvalidParameter("log_base must exceed 1")
        if self.restart_rule not in ("scheduled", "estimate-halving"):
            raise InvalidParameter(f"unknown restart rule {self.restart_rule!r}")

    def inner_iterations(self, consts: MonotoneConstants) -> int:
        K = 4.0 * math.sqrt(consts.L**2 * consts.eta0 * consts.eta_floor + 1.0) / (
            self.mu * consts.eta_floor)
        return max(1, ceil_int(self.constant_scale * K))

    def outer_rounds(self, dist0: float) -> int:
        if self.max_rounds is not None:
            return int(self.max_rounds)
        if dist0 <= 0:
            return 0
        x = math.log(math.sqrt(6.0) * dist0 / (2.0 * self.eps), self.log_base)
        return max(0, ceil_int(x))

    def inner_eps(self, consts: MonotoneConstants) -> float:
        M, lo = consts.M, consts.eta_floor
        return (self.mu * self.eps * math.sqrt(M * lo**2)
                / (2.0 * math.sqrt(5.0 * (1.0 + M * lo * consts.eta0))))


def _core(problem, u0, *, eps, consts: MonotoneConstants, n_iters, stream, estimator,
          scale, s2_cap, s1_cap, trace: RunTrace, k_offset=0, q_offset=0, budget=None,
          restart=None, halving=False, min_round=1, stop_on_estimate=False, driver=None):
    """Run the two-sequence recursion for ``n_iters`` steps from ``u0``.

    A ``driver`` left over from a previous round is advanced to ``u0`` instead
    of being rebuilt.  Returns (u_last, v_last, queries_used, reason, driver).
    """
    L, M = consts.L, consts.M
    carried = driver is not None
    if not carried:
        spec = OracleSpec(sigma=problem.sigma, lipschitz=L, dim=problem.dim)
        driver = make_driver(estimator, problem.oracle, spec, eps, stream, shifted=True,
                             scale=scale, s2_cap=s2_cap, s1_cap=s1_cap)
    q_base = driver.queries if carried else 0

    def record(k, u, v, est):
        s1, s2, branch = driver.last
        extras = {"gap": float(np.linalg.norm(u - v)), "eta": eta}
        if problem.solution is not None:
            extras["dist_sq"] = float(np.sum((u - problem.solution) ** 2))
        trace.append(TraceRecord(
            k=k_offset + k, queries_cum=q_offset + driver.queries - q_base,
            op_norm_true=float(np.linalg.norm(problem.F(u))),
            op_norm_est=float(np.linalg.norm(est)), batch_S1=s1, batch_S2=s2, branch=branch,
            restart=restart if k == 0 else None, extras=extras))
        if trace.iterates is not None:
            trace.iterates.append(u.copy())
            trace.estimates.append(v.copy())

    eta = consts.eta0
    v_prev = u0
    est_prev = driver.step(u0) if carried else driver.init(u0)
    start_norm = float(np.linalg.norm(est_prev))
    record(0, u0, v_prev, est_prev)
    u = u0
    reason = "completed"
    for k in range(1, n_iters + 1):
        w = u0 / (k + 1) + (k / (k + 1)) * u
        v = w - eta * est_prev
        if diverged(v):
            trace.status = "diverged"
            raise DivergenceError(k_offset + k, trace=trace)
        est = driver.step(v)
        u = w - eta * est
        if diverged(u):
            trace.status = "diverged"
            raise DivergenceError(k_offset + k, trace=trace)
        record(k, u, v, est)
        eta = eta_schedule(eta, k, M)
        v_prev, est_prev = v, est
        est_norm = float(np.linalg.norm(est))
        if budget is not None and q_offset + driver.queries - q_base >= budget:
            reason = "budget_exhausted"
            break
        if halving and k >= min_round and est_norm <= 0.5 * start_norm:
            reason = "halved"
            break
        if stop_on_estimate and est_norm <= eps:
            reason = "stopped_on_estimate"
            break
    return u, v_prev, driver.queries - q_base, reason, driver


def e_halpern(problem, config: MonotoneConfig, u0):
    """Extrapolated anchored iteration with a variance-reduced estimator.

    v_{k-1} = u0/(k+1) + k/(k+1) u_{k-1} - eta_{k-1} F_tilde(v_{k-2})
    u_k     = u0/(k+1) + k/(k+1) u_{k-1} - eta_{k-1} F_tilde(v_{k-1})

    The estimator tracks the v-sequence.  Runs
    N = ceil(sqrt(Lambda_0) / (sqrt(Lambda_1) eps)) iterations.
    """
    u0 = start_point(problem, u0)
    L = config.L if config.L is not None else problem.lipschitz
    eta0 = config.eta0 if config.eta0 is not None else eta_upper_bound(L)
    consts = monotone_constants(L, eta0)
    if config.max_iters is None:
        dist0 = resolve_dist0(problem, u0, config.dist0)
    else:
        dist0 = known_dist0(problem, u0, config.dist0)
    N = config.iterations(consts, dist0)
    trace = RunTrace(method="e-halpern" if config.estimator == "page"
                     else f"e-halpern-{config.estimator}",
                     meta={"N": N, "L": L, "eta0": eta0, "eta_floor": consts.eta_floor,
                           "lambda1": consts.lambda1, "dist0": dist0, "eps": config.eps,
                           "constant_scale": config.constant_scale})
    if config.record_iterates:
        trace.iterates, trace.estimates = [], []
    u, v, _, reason, _ = _core(problem, u0, eps=config.eps, consts=consts, n_iters=N,
                            stream=SeedStream.from_seed(config.master_seed),
                            estimator=config.estimator, scale=config.constant_scale,
                            s2_cap=config.s2_cap, s1_cap=config.s1_cap, trace=trace,
                            budget=config.budget,
                            stop_on_estimate=config.stop_on_estimate)
    trace.status = reason
    trace.meta["v_last"] = v
    return u, trace


def restarted_e_halpern(problem, config: SharpConfig, u0):
    """Restart the extrapolated iteration from its own output.

    Each of the N = ceil(log_b(sqrt(6) ||u0 - u*|| / (2 eps))) rounds runs K
    inner iterations at the inner target eps_k with a fresh estimator.
    """
    u0 = start_point(problem, u0)
    L = config.L if config.L is not None else problem.lipschitz
    eta0 = config.eta0 if config.eta0 is not None else eta_upper_bound(L)
    consts = monotone_constants(L, eta0)
    halving = config.restart_rule == "estimate-halving"
    if halving:
        # Practical rule: rounds end when the estimate halves, at the outer target.
        K = config.inner_max_iters or 10**9
        eps_k = config.eps
    else:
        K = config.inner_iterations(consts)
        eps_k = config.inner_eps(consts)
    if halving:
        dist0 = known_dist0(problem, u0, config.dist0)
        rounds = config.max_rounds if config.max_rounds is not None else 10**9
        if config.budget is None and config.max_rounds is None:
            raise InvalidParameter("estimate-halving restarts need a budget or max_rounds")
    else:
        dist0 = resolve_dist0(problem, u0, config.dist0)
        rounds = config.outer_rounds(dist0)
    trace = RunTrace(method="restarted-e-halpern",
                     meta={"N": rounds, "K": K, "eps_inner": eps_k, "L": L, "eta0": eta0,
                           "eta_floor": consts.eta_floor, "dist0": dist0, "eps": config.eps,
                           "mu": config.mu, "constant_scale": config.constant_scale})
    if config.record_iterates:
        trace.iterates, trace.estimates = [], []
    master = SeedStream.from_seed(config.master_seed)
    round_dist = [problem.distance_to_solution(u0)]
    u = u0
    k_offset = q_offset = 0
    trace.status = "completed"
    driver = None
    for r in range(1, rounds + 1):
        u, _, used, reason, last_driver = _core(
            problem, u, eps=eps_k, consts=consts, n_iters=K, stream=master.spawn(r),
            estimator=config.estimator, scale=config.constant_scale, s2_cap=config.s2_cap,
            s1_cap=config.s1_cap,
            trace=trace, k_offset=k_offset, q_offset=q_offset, budget=config.budget,
            restart=r, halving=halving, min_round=config.min_round, driver=driver)
        if halving and config.carry_estimator:
            driver = last_driver
        k_offset = trace.records[-1].k + 1
        q_offset += used
        round_dist.append(problem.distance_to_solution(u))
        if reason == "budget_exhausted":
            trace.status = reason
            break
    trace.meta["rounds_run"] = len(round_dist) - 1
    if problem.solution is not None:
        trace.meta["round_dist_sq"] = [d * d for d in round_dist]
    return u, trace
