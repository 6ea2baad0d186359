"""Recursive variance-reduced (PAGE-style) and mini-batch operator estimators."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from ._rng import SeedStream
from .oracle import OracleSpec, StochasticOracle, as_point

__all__ = [
    "InvalidParameter",
    "PageState",
    "page_schedule",
    "page_init",
    "page_step",
    "minibatch_schedule",
    "minibatch_estimate",
    "ceil_int",
    "refresh_batch",
]

log = logging.getLogger(__name__)

DEFAULT_S2_CAP = 10**7
DEFAULT_S1_CAP = 10**7


class InvalidParameter(ValueError):
    pass


def ceil_int(x: float) -> int:
    """Ceiling that ignores float noise sitting just above an integer."""
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def _capped(value: int, cap: int, what: str, k: int) -> int:
    if value > cap:
        log.warning("%s=%d at k=%d exceeds the cap; clamped to %d", what, value, k, cap)
        return cap
    return value


def refresh_batch(sigma: float, eps: float, p: float = 1.0, *, scale: float = 1.0,
                  cap: int = DEFAULT_S1_CAP, k: int = 0) -> int:
    """S1 = ceil(scale * 8 sigma^2 / (p eps^2)), clamped to [1, cap]."""
    return _capped(max(1, ceil_int(scale * 8.0 * sigma**2 / (p * eps**2))), cap, "S1", k)


def page_schedule(k: int, spec: OracleSpec, eps: float, dist_sq: float, *,
                  shifted: bool = False, scale: float = 1.0,
                  s2_cap: int = DEFAULT_S2_CAP,
                  s1_cap: int = DEFAULT_S1_CAP) -> tuple[float, int, int]:
    """Refresh probability and batch sizes for step ``k``.

    p = 2/(k+1), or min(2/k, 1) when ``shifted`` (the convention of the
    extrapolated method, whose loop counter runs one ahead of the estimator
    index).  S1 = ceil(8 sigma^2 / (p eps^2)), S2 = ceil(8 L^2 dist_sq /
    (p^2 eps^2)); both are clamped to at least 1 and at most ``s1_cap`` and
    ``s2_cap`` respectively, so a run never allocates unbounded batches.
    """
    if not eps > 0:
        raise InvalidParameter(f"eps must be > 0, got {eps}")
    if k < 1:
        raise InvalidParameter(f"schedule is defined for k >= 1, got {k}")
    if dist_sq < 0:
        raise InvalidParameter("dist_sq must be non-negative")
    p = min(2.0 / k, 1.0) if shifted else 2.0 / (k + 1)
    s1 = refresh_batch(spec.sigma, eps, p, scale=scale, cap=s1_cap, k=k)
    s2 = max(1, ceil_int(scale * 8.0 * spec.lipschitz**2 * dist_sq / (p**2 * eps**2)))
    return p, s1, _capped(s2, s2_cap, "S2", k)


@dataclass(frozen=True)
class PageState:
    estimate: np.ndarray
    anchor: np.ndarray
    k: int
    eps: float
    spec: OracleSpec
    cumulative_queries: int
    stream: SeedStream
    shifted: bool = False
    scale: float = 1.0
    s2_cap: int = DEFAULT_S2_CAP
    s1_cap: int = DEFAULT_S1_CAP
    last_branch: str = "init"
    last_S1: int = 0
    last_S2: int = 0


def page_init(u0, S1_0: int, oracle: StochasticOracle, *, eps: float,
              master_seed: int | SeedStream = 0, spec: OracleSpec | None = None,
              shifted: bool = False, scale: float = 1.0,
              s2_cap: int = DEFAULT_S2_CAP, s1_cap: int = DEFAULT_S1_CAP) -> PageState:
    """Average ``S1_0`` single-seed samples at ``u0`` and start the recursion."""
    if S1_0 < 1:
        raise InvalidParameter(f"S1_0 must be >= 1, got {S1_0}")
    if not eps > 0:
        raise InvalidParameter(f"eps must be > 0, got {eps}")
    u0 = as_point(u0, oracle.dim)
    stream = master_seed if isinstance(master_seed, SeedStream) else SeedStream.from_seed(master_seed)
    seeds, stream = stream.take(S1_0)
    estimate = oracle.batch_sum(u0, seeds) / S1_0
    return PageState(estimate=estimate, anchor=u0, k=0, eps=eps, spec=spec or oracle.spec,
                     cumulative_queries=S1_0, stream=stream, shifted=shifted, scale=scale,
                     s2_cap=s2_cap, s1_cap=s1_cap, last_branch="init", last_S1=S1_0, last_S2=0)


def page_step(state: PageState, new_point, oracle: StochasticOracle, *,
              force: str | None = None,
              schedule: tuple[float, int, int] | None = None,
              ) -> tuple[np.ndarray, int, PageState]:
    """Advance the estimator to ``new_point``.

    With probability p the estimate is a fresh S1-sample average at the new
    point; otherwise the previous estimate is corrected by the S2-sample mean
    of F_hat(new, z) - F_hat(anchor, z) under shared seeds.  ``force`` pins the
    branch ("refresh" or "recursive") for testing.
    """
    new_point = as_point(new_point, oracle.dim)
    k = state.k + 1
    if schedule is None:
        dist_sq = float(np.sum((new_point - state.anchor) ** 2))
        schedule = page_schedule(k, state.spec, state.eps, dist_sq, shifted=state.shifted,
                                 scale=state.scale, s2_cap=state.s2_cap,
                                 s1_cap=state.s1_cap)
    p, s1, s2 = schedule
    coin, stream = state.stream.uniform()
    if force is None:
        refresh = coin < p
    elif force in ("refresh", "recursive"):
        refresh = force == "refresh"
    else:
        raise InvalidParameter(f"unknown branch {force!r}")

    if refresh:
        seeds, stream = stream.take(s1)
        estimate = oracle.batch_sum(new_point, seeds) / s1
        used = s1
    else:
        seeds, stream = stream.take(s2)
        estimate = state.estimate + oracle.batch_sum_diff(new_point, state.anchor, seeds) / s2
        used = 2 * s2
    new_state = replace(state, estimate=estimate, anchor=new_point, k=k,
                        cumulative_queries=state.cumulative_queries + used, stream=stream,
                        last_branch="refresh" if refresh else "recursive",
                        last_S1=s1, last_S2=s2)
    return estimate, used, new_state


def minibatch_schedule(k: int, sigma: float, eps: float, scale: float = 1.0,
                       cap: int = DEFAULT_S1_CAP) -> int:
    """S_k = ceil(sigma^2 (k+1) / eps^2), clamped to [1, cap]."""
    if not eps > 0:
        raise InvalidParameter(f"eps must be > 0, got {eps}")
    return _capped(max(1, ceil_int(scale * sigma**2 * (k + 1) / eps**2)), cap, "S", k)


def minibatch_estimate(u, S: int, oracle: StochasticOracle,
                       seed: int | SeedStream = 0) -> tuple[np.ndarray, int]:
    """Average of ``S`` independent samples at ``u``."""
    if S < 1:
        raise InvalidParameter(f"batch size must be >= 1, got {S}")
    stream = seed if isinstance(seed, SeedStream) else SeedStream.from_seed(seed)
    seeds, _ = stream.take(S)
    return oracle.batch_sum(u, seeds) / S, S
