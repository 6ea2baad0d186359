"""Per-iteration run records shared by all solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TRACE_COLUMNS = ("k", "queries_cum", "op_norm_true", "op_norm_est",
                 "batch_S1", "batch_S2", "branch")


class DivergenceError(ArithmeticError):
    """An iterate became non-finite."""

    def __init__(self, iteration: int, message: str | None = None, trace=None):
        self.iteration = iteration
        self.trace = trace
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class ScheduleCollapse(ValueError):
    """The step-size recurrence left its admissible region (eta0 too large)."""


class UnsupportedProblem(ValueError):
    pass


@dataclass
class TraceRecord:
    k: int
    queries_cum: int
    op_norm_true: float
    op_norm_est: float
    batch_S1: int = 0
    batch_S2: int = 0
    branch: str = ""
    restart: int | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class RunTrace:
    method: str
    records: list[TraceRecord] = field(default_factory=list)
    status: str = "running"
    meta: dict = field(default_factory=dict)
    iterates: list[np.ndarray] | None = None
    estimates: list[np.ndarray] | None = None

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def cumulative_queries(self) -> int:
        return self.records[-1].queries_cum if self.records else 0

    @property
    def final_norm(self) -> float:
        return self.records[-1].op_norm_true if self.records else math.nan

    def column(self, name: str) -> np.ndarray:
        if name in TRACE_COLUMNS or name == "restart":
            return np.array([getattr(r, name) for r in self.records])
        return np.array([r.extras.get(name, math.nan) for r in self.records], dtype=float)

    def ks(self) -> np.ndarray:
        return self.column("k")

    def op_norms(self) -> np.ndarray:
        return self.column("op_norm_true").astype(float)

    def rows(self):
        for r in self.records:
            yield (r.k, r.queries_cum, r.op_norm_true, r.op_norm_est, r.batch_S1, r.batch_S2,
                   r.branch)
