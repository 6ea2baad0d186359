"""INI experiment configs with strict, line-numbered validation."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..estimators import InvalidParameter
from ..problems import (Ball, Box, FullSpace, Halfspace, InvalidSet, ProblemInstance,
                        bilinear_problem, identity_problem, load_matrix_csv,
                        make_linear_problem, make_rls_problem, make_synthetic_rls)
from ..solvers import BASELINES

THEORY_METHODS = ("halpern", "halpern-minibatch", "halpern-constrained", "e-halpern",
                  "restarted-e-halpern")
METHODS = THEORY_METHODS + BASELINES
PROBLEM_KINDS = ("identity", "linear", "bilinear", "rls", "rls-csv")


class ConfigError(ValueError):
    pass


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(f"expected a positive integer, got {v}")
    return v


def _floats(text: str) -> list[float]:
    vals = [float(t) for t in _split(text)]
    if not vals:
        raise ValueError("expected a comma-separated list of numbers")
    return vals


def _method(text: str) -> str:
    m = text.strip().lower()
    if m not in METHODS:
        raise ValueError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
    return m


def _methods(text: str) -> list[str]:
    return [_method(t) for t in _split(text)]


def _kind(text: str) -> str:
    k = text.strip().lower()
    if k not in PROBLEM_KINDS:
        raise ValueError(f"unknown problem kind {k!r}; expected one of {', '.join(PROBLEM_KINDS)}")
    return k


# key -> parser; every section's keys are closed.
SCHEMA = {
    "problem": {
        "kind": _kind, "dim": _pos_int, "spectrum": _floats, "skew": float, "sigma": float,
        "seed": int, "n": _pos_int, "d": _pos_int, "lam": float, "noise": float,
        "csv": str, "target": str, "standardize": _bool, "u0": _floats, "init_seed": int,
        "constraint": str,
    },
    "solver": {
        "method": _method, "methods": _methods, "eps": float, "eta0": float, "L": float,
        "mu": float, "dist0": float, "seed": int, "constant_scale": float,
        "budget": _pos_int, "max_iters": _pos_int, "estimator": str, "estimators": _split,
        "step": float, "batch": _pos_int, "eps_grid": _floats, "replications": _pos_int,
        "restart_rule": str, "log_base": float, "max_rounds": _pos_int,
        "checkpoints": lambda t: [int(x) for x in _split(t)], "reps": _pos_int,
        "s1_scale": float, "workers": _pos_int, "stop_on_estimate": _bool,
        "min_round": _pos_int, "inner_max_iters": _pos_int, "carry_estimator": _bool,
        "s1_cap": _pos_int, "s2_cap": _pos_int,
    },
    "output": {"dir": str, "formats": _split, "grid_points": _pos_int},
}

# [method:<label>] sections override [solver] keys for one compared method.
METHOD_PREFIX = "method:"
_NOT_OVERRIDABLE = ("methods", "estimators", "budget", "seed", "workers")


@dataclass
class ExperimentConfig:
    problem: dict
    solver: dict
    output: dict
    path: Path | None = None
    lines: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    def line_of(self, section: str, key: str) -> str:
        n = self.lines.get((section, key))
        where = f"{self.path}" if self.path else "<config>"
        return f"{where}:{n}" if n else where

    def error(self, section: str, key: str, message: str) -> ConfigError:
        return ConfigError(f"{self.line_of(section, key)}: [{section}] {key}: {message}")

    def for_method(self, label: str) -> "ExperimentConfig":
        """A view whose solver section includes the overrides for ``label``."""
        extra = self.overrides.get(label)
        if not extra:
            return self
        lines = dict(self.lines)
        for key in extra:
            lines[("solver", key)] = self.lines.get((METHOD_PREFIX + label, key))
        return replace(self, solver={**self.solver, **extra}, lines=lines)


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_numbers(text: str) -> dict:
    """(section, key) -> 1-based line of definition, scanned from the raw text."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith(("#", ";")):
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None and not line[:1].isspace():
            out.setdefault((section, m.group(1).strip()), i)
    return out


def parse_config(text: str, path: Path | None = None) -> ExperimentConfig:
    """Parse and type-check every key.  Unknown sections or keys are errors."""
    lines = _line_numbers(text)
    where = str(path) if path else "<config>"
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=where)
    except configparser.Error as err:
        raise ConfigError(f"{where}: {err}") from None
    cfg = ExperimentConfig(problem={}, solver={}, output={}, path=path, lines=lines)
    for section in parser.sections():
        if section.startswith(METHOD_PREFIX):
            label = section[len(METHOD_PREFIX):].strip()
            table = cfg.overrides.setdefault(label, {})
            for key, raw in parser.items(section):
                if key not in SCHEMA["solver"] or key in _NOT_OVERRIDABLE:
                    raise cfg.error(section, key, "not a per-method solver key")
                try:
                    table[key] = SCHEMA["solver"][key](raw)
                except ValueError as err:
                    raise cfg.error(section, key, str(err)) from None
            continue
        if section not in SCHEMA:
            n = lines.get((section, None))
            raise ConfigError(f"{where}:{n}: unknown section [{section}]; "
                              f"expected {', '.join(SCHEMA)} or {METHOD_PREFIX}<label>")
        schema = SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise cfg.error(section, key, f"unknown key; allowed: {', '.join(schema)}")
            try:
                getattr(cfg, section)[key] = schema[key](raw)
            except ValueError as err:
                raise cfg.error(section, key, str(err)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, path)


def _constraint(cfg: ExperimentConfig, dim: int):
    spec = cfg.problem.get("constraint")
    if spec is None or spec.strip().lower() == "none":
        return None
    name, _, args = spec.partition(":")
    name = name.strip().lower()
    try:
        vals = [float(t) for t in _split(args)]
        if name == "full":
            return FullSpace()
        if name == "ball" and len(vals) == 1:
            return Ball(vals[0])
        if name == "box" and len(vals) == 2:
            return Box((vals[0],) * dim, (vals[1],) * dim)
        if name == "halfspace" and len(vals) == dim + 1:
            return Halfspace(tuple(vals[:dim]), vals[dim])
    except (ValueError, InvalidSet) as err:
        raise cfg.error("problem", "constraint", str(err)) from None
    raise cfg.error("problem", "constraint",
                    "expected none, full, ball:R, box:LO,HI or halfspace:a1,...,ad,c")


def build_problem(cfg: ExperimentConfig) -> ProblemInstance:
    p = cfg.problem
    if "kind" not in p:
        raise ConfigError(f"{cfg.line_of('problem', None)}: [problem] kind is required")
    kind = p["kind"]
    sigma = p.get("sigma", 0.0)
    if sigma < 0:
        raise cfg.error("problem", "sigma", "must be >= 0")
    lam = p.get("lam", 1.5)
    if kind in ("rls", "rls-csv") and not lam > 1:
        raise cfg.error("problem", "lam",
                        f"must be > 1 so the objective is strongly concave in y (got {lam})")
    try:
        if kind == "identity":
            prob = identity_problem(p.get("dim", 2), sigma)
        elif kind == "bilinear":
            prob = bilinear_problem(sigma)
        elif kind == "linear":
            if "spectrum" not in p:
                raise ConfigError(f"{cfg.line_of('problem', 'kind')}: [problem] linear "
                                  "problems need a spectrum")
            spectrum = p["spectrum"]
            dim = p.get("dim", len(spectrum))
            if len(spectrum) not in (1, dim):
                raise cfg.error("problem", "spectrum", f"needs 1 or {dim} values")
            if len(spectrum) == 1:
                spectrum = spectrum * dim
            prob = make_linear_problem(dim, spectrum, skew=p.get("skew", 0.0), sigma=sigma,
                                       seed=p.get("seed", 0))
        elif kind == "rls":
            prob = make_synthetic_rls(n=p.get("n", 500), d=p.get("d", 20), lam=lam,
                                      noise=p.get("noise", 0.1), seed=p.get("seed", 0))
        else:
            if "csv" not in p or "target" not in p:
                raise ConfigError(f"{cfg.line_of('problem', 'kind')}: [problem] rls-csv "
                                  "needs csv and target")
            csv_path = Path(p["csv"])
            if cfg.path is not None and not csv_path.is_absolute():
                csv_path = cfg.path.parent / csv_path
            target = p["target"]
            target = int(target) if target.lstrip("-").isdigit() else target
            A, b = load_matrix_csv(csv_path, target, standardize=p.get("standardize", True))
            prob = make_rls_problem(A, b, lam=lam)
    except ConfigError:
        raise
    except (ValueError, OSError) as err:
        raise ConfigError(f"{cfg.line_of('problem', 'kind')}: [problem] {err}") from None
    proj = _constraint(cfg, prob.dim)
    if proj is not None:
        prob = prob.with_projector(proj)
    return prob


def random_start(dim: int, seed: int) -> np.ndarray:
    """Standard normal start scaled to unit expected norm."""
    return np.random.default_rng(seed).standard_normal(dim) / np.sqrt(dim)


def initial_point(cfg: ExperimentConfig, problem: ProblemInstance) -> np.ndarray:
    if "u0" in cfg.problem:
        u0 = np.array(cfg.problem["u0"], dtype=np.float64)
        if u0.shape != (problem.dim,):
            raise cfg.error("problem", "u0", f"needs {problem.dim} values, got {u0.size}")
        return u0
    if "init_seed" in cfg.problem:
        return random_start(problem.dim, cfg.problem["init_seed"])
    u0 = np.zeros(problem.dim)
    if problem.solution is not None and np.allclose(problem.solution, 0):
        u0[0] = 1.0
    return u0
