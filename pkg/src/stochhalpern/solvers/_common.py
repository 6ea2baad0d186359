from __future__ import annotations

import numpy as np

from ..estimators import InvalidParameter
from ..oracle import as_point


def resolve_dist0(problem, u0: np.ndarray, dist0: float | None) -> float:
    """Exact ||u0 - u*|| when the solution is known, otherwise the user bound."""
    exact = problem.distance_to_solution(u0)
    if exact is not None:
        return exact
    if dist0 is None:
        raise InvalidParameter("dist0 is required when the problem has no known solution")
    if not dist0 > 0:
        raise InvalidParameter(f"dist0 must be > 0, got {dist0}")
    return float(dist0)


# Beyond this magnitude squared distances overflow, so the run is treated as diverged.
DIVERGENCE_MAGNITUDE = 1e150


def diverged(x: np.ndarray) -> bool:
    return not np.all(np.abs(x) <= DIVERGENCE_MAGNITUDE)


def start_point(problem, u0) -> np.ndarray:
    return as_point(u0, problem.dim)


def true_norm(problem, u) -> float:
    return float(np.linalg.norm(problem.F(u)))


def check_common(eps, L, scale):
    if not eps > 0:
        raise InvalidParameter(f"eps must be > 0, got {eps}")
    if L is not None and not L > 0:
        raise InvalidParameter(f"L must be > 0, got {L}")
    if not scale > 0:
        raise InvalidParameter(f"constant_scale must be > 0, got {scale}")


def known_dist0(problem, u0: np.ndarray, dist0: float | None) -> float:
    """Like resolve_dist0 but returns NaN instead of raising; for metadata only."""
    exact = problem.distance_to_solution(u0)
    if exact is not None:
        return exact
    return float(dist0) if dist0 is not None else float("nan")
