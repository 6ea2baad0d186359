"""Stochastic Halpern iteration for cocoercive operators (with and without constraints)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._rng import SeedStream
from ..estimators import DEFAULT_S1_CAP, DEFAULT_S2_CAP, InvalidParameter, ceil_int
from ..oracle import OracleSpec
from ._common import check_common, diverged, resolve_dist0, start_point
from ._drivers import make_driver
from .trace import DivergenceError, RunTrace, TraceRecord, UnsupportedProblem

__all__ = [
    "CocoerciveConfig",
    "halpern_cocoercive",
    "halpern_cocoercive_minibatch",
    "halpern_cocoercive_constrained",
    "gradient_mapping",
]

# Lambda_0 = RATE_CONSTANT * L * ||u0 - u*||; N = ceil(2 Lambda_0 / eps).
UNCONSTRAINED_RATE_CONSTANT = 76.0
CONSTRAINED_RATE_CONSTANT = 20.0


@dataclass
class CocoerciveConfig:
    """Parameters of the anchored iteration for 1/L-cocoercive operators.

    ``L`` defaults to the problem's constant.  ``constant_scale`` multiplies the
    iteration count and every batch size; 1 reproduces the theory exactly.
    ``budget`` optionally stops the run once that many oracle queries are used.
    """

    eps: float
    L: float | None = None
    dist0: float | None = None
    max_iters: int | None = None
    stop_on_estimate: bool = False
    master_seed: int = 0
    constant_scale: float = 1.0
    budget: int | None = None
    record_iterates: bool = False
    s2_cap: int = DEFAULT_S2_CAP
    s1_cap: int = DEFAULT_S1_CAP

    def __post_init__(self):
        check_common(self.eps, self.L, self.constant_scale)

    def iterations(self, L: float, dist0: float, rate_constant: float = UNCONSTRAINED_RATE_CONSTANT) -> int:
        if self.max_iters is not None:
            return int(self.max_iters)
        return ceil_int(self.constant_scale * 2.0 * rate_constant * L * dist0 / self.eps)


def gradient_mapping(u, F_value, eta: float, projector=None) -> np.ndarray:
    """eta * (u - Proj(u - F_value / eta)); equals F_value when unconstrained."""
    if not eta > 0:
        raise InvalidParameter(f"eta must be > 0, got {eta}")
    u = np.asarray(u, dtype=np.float64)
    F_value = np.asarray(F_value, dtype=np.float64)
    if projector is None:
        return F_value.copy()
    return eta * (u - projector(u - F_value / eta))


def _run(problem, config: CocoerciveConfig, u0, *, estimator: str, constrained: bool,
         method: str):
    u0 = start_point(problem, u0)
    L = config.L if config.L is not None else problem.lipschitz
    dist0 = resolve_dist0(problem, u0, config.dist0)
    rate = CONSTRAINED_RATE_CONSTANT if constrained else UNCONSTRAINED_RATE_CONSTANT
    N = config.iterations(L, dist0, rate)
    proj = problem.projector
    oracle = problem.oracle
    spec = OracleSpec(sigma=problem.sigma, lipschitz=L, dim=problem.dim)
    driver = make_driver(estimator, oracle, spec, config.eps,
                         SeedStream.from_seed(config.master_seed),
                         scale=config.constant_scale, s2_cap=config.s2_cap,
                         s1_cap=config.s1_cap)

    trace = RunTrace(method=method, meta={"N": N, "L": L, "dist0": dist0, "eps": config.eps,
                                          "constant_scale": config.constant_scale})
    if config.record_iterates:
        trace.iterates, trace.estimates = [], []

    def record(k, u, est):
        Fu = problem.F(u)
        if constrained:
            true_val = gradient_mapping(u, Fu, L, proj)
            est_val = gradient_mapping(u, est, L, proj)
            extras = {"map_error": float(np.linalg.norm(true_val - est_val)),
                      "est_error": float(np.linalg.norm(Fu - est))}
        else:
            true_val, est_val = Fu, est
            extras = {"est_error": float(np.linalg.norm(Fu - est))}
        s1, s2, branch = driver.last
        trace.append(TraceRecord(k=k, queries_cum=driver.queries,
                                 op_norm_true=float(np.linalg.norm(true_val)),
                                 op_norm_est=float(np.linalg.norm(est_val)),
                                 batch_S1=s1, batch_S2=s2, branch=branch, extras=extras))
        if trace.iterates is not None:
            trace.iterates.append(u.copy())
            trace.estimates.append(np.array(est, copy=True))
        return float(np.linalg.norm(est_val))

    est = driver.init(u0)
    record(0, u0, est)
    u = u0
    trace.status = "completed"
    for k in range(1, N + 1):
        if constrained:
            inner = proj(u - est / L)
        else:
            inner = u - est / L
        u = u0 / (k + 1) + (k / (k + 1)) * inner
        if diverged(u):
            trace.status = "diverged"
            raise DivergenceError(k, trace=trace)
        est = driver.step(u)
        est_norm = record(k, u, est)
        if config.stop_on_estimate and est_norm <= config.eps:
            trace.status = "stopped_on_estimate"
            break
        if config.budget is not None and driver.queries >= config.budget:
            trace.status = "budget_exhausted"
            break
    return u, trace


def halpern_cocoercive(problem, config: CocoerciveConfig, u0):
    """Anchored iteration with the recursive variance-reduced estimator.

    u_k = u0/(k+1) + k/(k+1) * (u_{k-1} - F_tilde(u_{k-1}) / L), run for
    N = ceil(152 L ||u0 - u*|| / eps) iterations (times ``constant_scale``).
    """
    return _run(problem, config, u0, estimator="page", constrained=False, method="halpern")


def halpern_cocoercive_minibatch(problem, config: CocoerciveConfig, u0):
    """Same recursion with S_k = ceil(sigma^2 (k+1) / eps^2) fresh samples per step."""
    return _run(problem, config, u0, estimator="minibatch", constrained=False,
                method="halpern-minibatch")


def halpern_cocoercive_constrained(problem, config: CocoerciveConfig, u0):
    """Projected variant driven by the estimated gradient mapping with step 1/L.

    u_k = u0/(k+1) + k/(k+1) * Proj(u_{k-1} - F_tilde(u_{k-1}) / L), run for
    N = ceil(40 L ||u0 - u*|| / eps) iterations.  Trace norms are those of the
    gradient mapping G_L.
    """
    if problem.projector is None:
        raise UnsupportedProblem("the constrained solver needs a problem with a projector")
    return _run(problem, config, u0, estimator="page", constrained=True,
                method="halpern-constrained")

