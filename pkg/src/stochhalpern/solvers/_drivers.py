"""Uniform wrappers so a solver loop can swap PAGE for mini-batch estimates."""

from __future__ import annotations

import numpy as np

from .._rng import SeedStream
from ..estimators import (DEFAULT_S1_CAP, DEFAULT_S2_CAP, minibatch_schedule, page_init,
                          page_step, refresh_batch)
from ..oracle import OracleSpec, StochasticOracle


class PageDriver:
    def __init__(self, oracle: StochasticOracle, spec: OracleSpec, eps: float,
                 stream: SeedStream, *, shifted: bool = False, scale: float = 1.0,
                 s2_cap: int = DEFAULT_S2_CAP, s1_cap: int = DEFAULT_S1_CAP):
        self.oracle = oracle
        self.spec = spec
        self.eps = eps
        self.stream = stream
        self.shifted = shifted
        self.scale = scale
        self.s2_cap = s2_cap
        self.s1_cap = s1_cap
        self.state = None

    def init(self, u0) -> np.ndarray:
        s1 = refresh_batch(self.spec.sigma, self.eps, scale=self.scale, cap=self.s1_cap)
        self.state = page_init(u0, s1, self.oracle, eps=self.eps, master_seed=self.stream,
                               spec=self.spec, shifted=self.shifted, scale=self.scale,
                               s2_cap=self.s2_cap, s1_cap=self.s1_cap)
        return self.state.estimate

    def step(self, new_point) -> np.ndarray:
        est, _, self.state = page_step(self.state, new_point, self.oracle)
        return est

    @property
    def queries(self) -> int:
        return self.state.cumulative_queries

    @property
    def last(self) -> tuple[int, int, str]:
        s = self.state
        return s.last_S1, s.last_S2, s.last_branch


class MinibatchDriver:
    """Fresh average of S_j samples at every call; ``batch`` fixes S_j."""

    def __init__(self, oracle: StochasticOracle, sigma: float, eps: float,
                 stream: SeedStream, *, scale: float = 1.0, batch: int | None = None,
                 cap: int = DEFAULT_S1_CAP):
        self.oracle = oracle
        self.sigma = sigma
        self.eps = eps
        self.stream = stream
        self.scale = scale
        self.batch = batch
        self.cap = cap
        self.j = -1
        self.queries = 0
        self.last = (0, 0, "")

    def _estimate(self, u) -> np.ndarray:
        self.j += 1
        if self.batch is not None:
            s = self.batch
        else:
            s = minibatch_schedule(self.j, self.sigma, self.eps, self.scale, self.cap)
        seeds, _ = self.stream.spawn(self.j).take(s)
        est = self.oracle.batch_sum(u, seeds) / s
        self.queries += s
        self.last = (s, 0, "batch")
        return est

    def init(self, u0) -> np.ndarray:
        return self._estimate(u0)

    def step(self, new_point) -> np.ndarray:
        return self._estimate(new_point)


def make_driver(kind: str, oracle, spec: OracleSpec, eps: float, stream: SeedStream, *,
                shifted: bool = False, scale: float = 1.0, s2_cap: int = DEFAULT_S2_CAP,
                s1_cap: int = DEFAULT_S1_CAP):
    if kind == "page":
        return PageDriver(oracle, spec, eps, stream, shifted=shifted, scale=scale,
                          s2_cap=s2_cap, s1_cap=s1_cap)
    if kind == "minibatch":
        return MinibatchDriver(oracle, spec.sigma, eps, stream, scale=scale, cap=s1_cap)
    if kind == "single":
        return MinibatchDriver(oracle, spec.sigma, eps, stream, batch=1)
    raise ValueError(f"unknown estimator {kind!r}; expected page, minibatch or single")
