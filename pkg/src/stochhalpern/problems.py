"""Problem instances with known constants and (where possible) known solutions."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .oracle import (ContractViolation, FiniteSumOracle, GaussianOracle, OracleSpec,
                     StochasticOracle, as_point)

__all__ = [
    "ProblemInstance",
    "LinearOperatorProblem",
    "RLSProblem",
    "FullSpace",
    "Ball",
    "Box",
    "Halfspace",
    "InvalidSet",
    "CSVFormatError",
    "project",
    "make_linear_problem",
    "identity_problem",
    "bilinear_problem",
    "rls_operator",
    "rls_lagrangian",
    "RLSRowOracle",
    "make_rls_problem",
    "make_synthetic_rls",
    "load_matrix_csv",
]

log = logging.getLogger(__name__)


# -- constraint sets -----------------------------------------------------------------


class InvalidSet(ValueError):
    pass


class _ConvexSet:
    def project(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, u):
        return self.project(np.asarray(u, dtype=np.float64))

    def distance(self, u) -> float:
        u = np.asarray(u, dtype=np.float64)
        return float(np.linalg.norm(u - self.project(u)))


@dataclass(frozen=True)
class FullSpace(_ConvexSet):
    """The whole space; projection is the identity."""

    def project(self, u):
        return np.array(u, dtype=np.float64, copy=True)


@dataclass(frozen=True)
class Ball(_ConvexSet):
    radius: float
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidSet(f"ball radius must be > 0, got {self.radius}")

    def project(self, u):
        c = 0.0 if self.center is None else np.asarray(self.center)
        w = u - c
        norm = np.linalg.norm(w, axis=-1, keepdims=True)
        factor = np.where(norm > self.radius, self.radius / np.maximum(norm, 1e-300), 1.0)
        return c + w * factor


@dataclass(frozen=True)
class Box(_ConvexSet):
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InvalidSet("box bounds must have equal shape and satisfy lo <= hi")

    def project(self, u):
        return np.clip(u, np.asarray(self.lo, float), np.asarray(self.hi, float))


@dataclass(frozen=True)
class Halfspace(_ConvexSet):
    """The set {u : <a, u> <= c}."""

    a: tuple[float, ...]
    c: float

    def __post_init__(self):
        if not np.any(np.asarray(self.a, float) != 0):
            raise InvalidSet("halfspace normal must be non-zero")

    def project(self, u):
        a = np.asarray(self.a, float)
        excess = np.maximum(u @ a - self.c, 0.0)
        return u - np.expand_dims(excess, -1) * a / (a @ a)


def project(convex_set: _ConvexSet, u) -> np.ndarray:
    """Euclidean projection of ``u`` onto ``convex_set``."""
    return convex_set.project(np.asarray(u, dtype=np.float64))


# -- generic instance ----------------------------------------------------------------


@dataclass
class ProblemInstance:
    """An operator, its stochastic oracle, and the constants the solvers need.

    ``lipschitz`` is the mean-square Lipschitz constant of the oracle, which
    also bounds the Lipschitz constant of F.  ``cocoercivity`` is gamma in
    <F(u)-F(v), u-v> >= gamma ||F(u)-F(v)||^2, or None if F is not cocoercive.
    """

    name: str
    operator: Callable
    oracle: StochasticOracle
    lipschitz: float
    sigma: float
    mu: float = 0.0
    cocoercivity: float | None = None
    solution: np.ndarray | None = None
    projector: _ConvexSet | None = None

    @property
    def dim(self) -> int:
        return self.oracle.dim

    def F(self, u) -> np.ndarray:
        return np.asarray(self.operator(np.asarray(u, dtype=np.float64)), dtype=np.float64)

    def distance_to_solution(self, u) -> float | None:
        if self.solution is None:
            return None
        return float(np.linalg.norm(np.asarray(u, float) - self.solution))

    def with_projector(self, projector: _ConvexSet) -> "ProblemInstance":
        return replace(self, projector=projector)


@dataclass
class LinearOperatorProblem(ProblemInstance):
    """F(u) = M u + shift."""

    matrix: np.ndarray = field(default=None, repr=False)
    shift: np.ndarray = field(default=None, repr=False)


def make_linear_problem(dim: int, spectrum, skew: float = 0.0, sigma: float = 0.0,
                        seed: int = 0, name: str | None = None) -> LinearOperatorProblem:
    """M = Q diag(spectrum) Q^T + skew * J with a seeded orthogonal Q.

    J pairs coordinates (0,1), (2,3), ... as [[0, 1], [-1, 0]] blocks, so a
    zero spectrum with skew=1 in two dimensions gives F(x, y) = (y, -x).  The
    solution is the origin and the oracle adds Gaussian noise of total second
    moment sigma**2.
    """
    spectrum = np.asarray(spectrum, dtype=np.float64).ravel()
    if spectrum.size != dim:
        raise ValueError(f"spectrum has {spectrum.size} entries for dim={dim}")
    if np.any(spectrum < 0):
        raise ValueError("eigenvalues must be non-negative")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    sym = (q * spectrum) @ q.T
    sym = 0.5 * (sym + sym.T)
    if np.all(spectrum == spectrum[0]):
        sym = np.diag(spectrum)
    j = np.zeros((dim, dim))
    for i in range(0, dim - 1, 2):
        j[i, i + 1] = 1.0
        j[i + 1, i] = -1.0
    matrix = sym + skew * j
    L = float(np.linalg.norm(matrix, 2))
    if L == 0:
        raise ValueError("the zero operator has no positive Lipschitz constant")
    lam_max = float(spectrum.max())
    gamma = 1.0 / lam_max if skew == 0 and lam_max > 0 else None
    mu = float(spectrum.min())
    shift = np.zeros(dim)

    def operator(u, _m=matrix):
        return u @ _m.T

    oracle = GaussianOracle(operator, OracleSpec(sigma=sigma, lipschitz=L, dim=dim))
    return LinearOperatorProblem(
        name=name or "linear", operator=operator, oracle=oracle, lipschitz=L, sigma=sigma,
        mu=mu, cocoercivity=gamma, solution=np.zeros(dim), matrix=matrix, shift=shift)


def identity_problem(dim: int, sigma: float = 0.0) -> LinearOperatorProblem:
    return make_linear_problem(dim, np.ones(dim), sigma=sigma, name="identity")


def bilinear_problem(sigma: float = 0.0) -> LinearOperatorProblem:
    """F(x, y) = (y, -x): monotone, 1-Lipschitz, not cocoercive."""
    return make_linear_problem(2, [0.0, 0.0], skew=1.0, sigma=sigma, name="bilinear")


# -- robust least squares ------------------------------------------------------------


def rls_lagrangian(x, y, A, b, lam) -> float:
    """L(x, y) = ||Ax - y||^2 / (2n) - lam ||y - b||^2 / (2n)."""
    n = A.shape[0]
    r = A @ x - y
    return float(r @ r / (2 * n) - lam * np.sum((y - b) ** 2) / (2 * n))


def rls_operator(x, y, A, b, lam) -> np.ndarray:
    """(grad_x L, -grad_y L) for the robust least-squares Lagrangian."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, d = A.shape
    if x.shape != (d,) or y.shape != (n,) or b.shape != (n,):
        raise ContractViolation(
            f"expected x:{d}, y:{n}, b:{n}; got {x.shape}, {y.shape}, {b.shape}")
    r = A @ x - y
    return np.concatenate([A.T @ r / n, r / n + lam * (y - b) / n])


class RLSRowOracle(FiniteSumOracle):
    """Single-row sampling for the robust least-squares operator.

    For row i: F_hat(u, i) = (a_i r_i, (r_i + lam (y_i - b_i)) e_i) with
    r_i = a_i^T x - y_i, which is n times the i-th term of the 1/n average.
    """

    def __init__(self, A, b, lam, sigma: float, lipschitz: float, mean_operator):
        self.A = A
        self.b = b
        self.lam = lam
        n, d = A.shape
        self.d = d
        super().__init__(self._component, n, OracleSpec(sigma=sigma, lipschitz=lipschitz,
                                                        dim=d + n), mean_operator)

    def _component(self, idx, points):
        n, d = self.n, self.d
        x, y = points[:, :d], points[:, d:]
        ai = self.A[idx]                                   # (S, d)
        # Elementwise sum rather than matmul: the summation order then does not
        # depend on how many points are queried together.
        r = (ai[:, None, :] * x[None, :, :]).sum(axis=-1) - y[:, idx].T   # (S, m)
        out = np.zeros((idx.size, points.shape[0], d + n))
        out[:, :, :d] = r[:, :, None] * ai[:, None, :]
        yval = r + self.lam * (y[:, idx].T - self.b[idx][:, None])
        out[np.arange(idx.size), :, d + idx] = yval
        return out / n

    def _row_sums(self, x, y, b, seeds):
        idx = self.indices(seeds)
        ai = self.A[idx]
        r = ai @ x - y[idx]
        top = ai.T @ r
        bottom = np.bincount(idx, weights=r + self.lam * (y[idx] - b[idx]), minlength=self.n)
        return np.concatenate([top, bottom])

    def _sum(self, u, seeds):
        return self._row_sums(u[:self.d], u[self.d:], self.b, seeds)

    def _sum_diff(self, u, v, seeds):
        w = u - v
        return self._row_sums(w[:self.d], w[self.d:], np.zeros(self.n), seeds)


@dataclass
class RLSProblem(ProblemInstance):
    A: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)
    lam: float = 1.5
    operator_lipschitz: float = 0.0

    def split(self, u):
        d = self.A.shape[1]
        u = np.asarray(u, float)
        return u[:d], u[d:]


def _rls_linear_parts(A, b, lam):
    n, d = A.shape
    J = np.zeros((d + n, d + n))
    J[:d, :d] = A.T @ A / n
    J[:d, d:] = -A.T / n
    J[d:, :d] = A / n
    J[d:, d:] = np.eye(n) * (lam - 1.0) / n
    c = np.concatenate([np.zeros(d), -lam * b / n])
    return J, c


def _rls_ms_lipschitz(A, lam) -> float:
    """Exact mean-square Lipschitz constant of the row oracle."""
    n, d = A.shape
    Q = np.hstack([A, -np.eye(n)])
    R = np.hstack([A, (lam - 1.0) * np.eye(n)])
    row_sq = np.sum(A**2, axis=1)
    H = (Q.T * row_sq) @ Q / n + R.T @ R / n
    return float(math.sqrt(np.linalg.eigvalsh(H)[-1]))


def make_rls_problem(A, b, lam: float = 1.5, u_ref=None) -> RLSProblem:
    """Robust least squares as a monotone inclusion over u = (x, y).

    sigma is the exact root variance of the row oracle at ``u_ref`` (default
    the origin), computed by enumerating all rows.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if A.ndim != 2 or A.size == 0:
        raise ContractViolation("data matrix must be a non-empty 2-D array")
    if b.shape != (A.shape[0],):
        raise ContractViolation(f"b has shape {b.shape}, expected ({A.shape[0]},)")
    if not lam > 1:
        raise ValueError(f"lambda must exceed 1 for concavity in y, got {lam}")
    n, d = A.shape
    J, c = _rls_linear_parts(A, b, lam)

    def operator(u):
        # Same map as u @ J.T + c, in O(nd) instead of O((n+d)^2).
        x, y = u[..., :d], u[..., d:]
        r = x @ A.T - y
        return np.concatenate([r @ A / n, (r + lam * (y - b)) / n], axis=-1)

    solution = np.linalg.solve(J, -c)
    sym = 0.5 * (J + J.T)
    mu = float(np.linalg.eigvalsh(sym)[0])
    op_L = float(np.linalg.norm(J, 2))
    ms_L = max(_rls_ms_lipschitz(A, lam), op_L)

    u_ref = np.zeros(d + n) if u_ref is None else as_point(u_ref, d + n)
    oracle = RLSRowOracle(A, b, lam, sigma=0.0, lipschitz=ms_L, mean_operator=operator)
    all_rows = oracle.n * oracle._component(np.arange(n), u_ref[None, :])[:, 0, :]
    var = float(np.mean(np.sum(all_rows**2, axis=1)) - np.sum(operator(u_ref) ** 2))
    sigma = math.sqrt(max(var, 0.0))
    oracle.spec = OracleSpec(sigma=sigma, lipschitz=ms_L, dim=d + n)
    return RLSProblem(name="rls", operator=operator, oracle=oracle, lipschitz=ms_L,
                      sigma=sigma, mu=mu, cocoercivity=None, solution=solution, A=A, b=b,
                      lam=lam, operator_lipschitz=op_L)


def make_synthetic_rls(n: int = 500, d: int = 20, lam: float = 1.5, noise: float = 0.1,
                       seed: int = 0, u_ref=None) -> RLSProblem:
    """Gaussian design with standardized columns and a noisy linear response."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    A = (A - A.mean(axis=0)) / A.std(axis=0)
    x_true = rng.standard_normal(d) / math.sqrt(d)
    b = A @ x_true + noise * rng.standard_normal(n)
    return make_rls_problem(A, b, lam, u_ref=u_ref)


# -- CSV ingestion -------------------------------------------------------------------


class CSVFormatError(ValueError):
    pass


def load_matrix_csv(path, target_column, standardize: bool = False):
    """Read a numeric CSV with a header row into (A, b).

    ``target_column`` is a header name or a zero-based column index.  With
    ``standardize`` every feature column is shifted to mean 0 and scaled to
    unit (population) standard deviation; constant columns are only centered.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if isinstance(target_column, str) and not target_column.lstrip("-").isdigit():
            if target_column not in header:
                raise CSVFormatError(f"{path}: no column named {target_column!r}")
            t = header.index(target_column)
        else:
            t = int(target_column)
            if not -len(header) <= t < len(header):
                raise CSVFormatError(f"{path}: column index {t} out of range")
            t %= len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise CSVFormatError(
                    f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
            values = []
            for col, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise CSVFormatError(
                        f"{path}:{lineno}: missing value in column {col + 1} ({header[col]})")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CSVFormatError(
                        f"{path}:{lineno}: non-numeric cell {cell!r} in column {col + 1} "
                        f"({header[col]})") from None
            rows.append(values)
    if not rows:
        raise CSVFormatError(f"{path}: no data rows")
    data = np.array(rows)
    b = data[:, t].copy()
    A = np.delete(data, t, axis=1)
    if standardize:
        mean = A.mean(axis=0)
        std = A.std(axis=0)
        A = (A - mean) / np.where(std > 0, std, 1.0)
    log.info("loaded %s: n=%d, d=%d", path, A.shape[0], A.shape[1])
    return A, b
