"""Plain stochastic baselines with fixed step and fixed mini-batch size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._rng import SeedStream
from ..estimators import InvalidParameter
from ._common import diverged, start_point
from ._drivers import MinibatchDriver
from .trace import DivergenceError, RunTrace, TraceRecord

__all__ = ["BaselineConfig", "BASELINES", "default_step", "run_baseline"]

BASELINES = ("gda", "eg", "popov", "halpern-single")


def default_step(method: str, L: float) -> float:
    if method == "gda":
        return 1.0 / (2.0 * L)
    if method in ("eg", "popov"):
        return 1.0 / (3.0 * L)
    if method == "halpern-single":
        return 1.0 / L
    raise InvalidParameter(f"unknown baseline {method!r}; expected one of {BASELINES}")


@dataclass
class BaselineConfig:
    """``budget`` caps oracle queries; ``max_iters`` caps iterations.  At least one is needed."""

    method: str
    step: float | None = None
    batch: int = 1
    budget: int | None = None
    max_iters: int | None = None
    master_seed: int = 0
    record_iterates: bool = False

    def __post_init__(self):
        if self.method not in BASELINES:
            raise InvalidParameter(f"unknown baseline {self.method!r}; expected one of {BASELINES}")
        if self.step is not None and not self.step > 0:
            raise InvalidParameter(f"step must be > 0, got {self.step}")
        if int(self.batch) < 1:
            raise InvalidParameter(f"batch must be >= 1, got {self.batch}")
        if self.budget is None and self.max_iters is None:
            raise InvalidParameter("a baseline run needs a budget or max_iters")


def run_baseline(problem, config: BaselineConfig, u0):
    """Run one baseline and return (u_last, trace).

    gda:             u <- P(u - g F(u))
    eg:              w = P(u - g F(u)),  u <- P(u - g F(w))
    popov:           w_k = P(u_k - g F(w_{k-1})),  u_{k+1} = P(u_k - g F(w_k))
    halpern-single:  u_k = u0/(k+1) + k/(k+1) P(u_{k-1} - g F(u_{k-1}))

    Every F is a fresh average of ``batch`` samples.
    """
    u0 = start_point(problem, u0)
    method = config.method
    step = config.step if config.step is not None else default_step(method, problem.lipschitz)
    proj = problem.projector or (lambda x: x)
    driver = MinibatchDriver(problem.oracle, problem.sigma, 1.0,
                             SeedStream.from_seed(config.master_seed), batch=int(config.batch))
    trace = RunTrace(method=method, meta={"step": step, "batch": int(config.batch),
                                          "budget": config.budget})
    if config.record_iterates:
        trace.iterates, trace.estimates = [], []

    def record(k, u, est):
        trace.append(TraceRecord(k=k, queries_cum=driver.queries,
                                 op_norm_true=float(np.linalg.norm(problem.F(u))),
                                 op_norm_est=float(np.linalg.norm(est)),
                                 batch_S1=int(config.batch), branch="batch"))
        if trace.iterates is not None:
            trace.iterates.append(u.copy())
            trace.estimates.append(est.copy())

    u = u0
    est = driver.init(u0)
    record(0, u0, est)
    w_est = est  # popov: estimate at the previous leading point
    k = 0

    def finite(x):
        if diverged(x):
            trace.status = "diverged"
            raise DivergenceError(k, trace=trace)
        return x

    trace.status = "completed"
    while True:
        if config.budget is not None and driver.queries >= config.budget:
            trace.status = "budget_exhausted"
            break
        if config.max_iters is not None and k >= config.max_iters:
            break
        k += 1
        if method == "gda":
            u = finite(proj(u - step * est))
            est = driver.step(u)
        elif method == "eg":
            w = finite(proj(u - step * est))
            u = finite(proj(u - step * driver.step(w)))
            est = driver.step(u)
        elif method == "popov":
            w = finite(proj(u - step * w_est))
            w_est = driver.step(w)
            u = finite(proj(u - step * w_est))
            est = w_est
        else:
            u = finite(u0 / (k + 1) + (k / (k + 1)) * proj(u - step * est))
            est = driver.step(u)
        record(k, u, est)
    return u, trace
