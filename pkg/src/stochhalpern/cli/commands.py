"""The four experiment commands.  Each returns a process exit code."""

from __future__ import annotations

import csv
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..diagnostics import (ScalingFailure, estimator_variance_profile, halpern_path,
                           measure_query_scaling)
from ..estimators import InvalidParameter
from ..solvers import (TRACE_COLUMNS, BaselineConfig, CocoerciveConfig, DivergenceError,
                       MonotoneConfig, RunTrace, ScheduleCollapse, SharpConfig, e_halpern,
                       eta_upper_bound, halpern_cocoercive, halpern_cocoercive_constrained,
                       halpern_cocoercive_minibatch, monotone_constants,
                       restarted_e_halpern, run_baseline)
from ..solvers.baselines import BASELINES
from .config import ConfigError, ExperimentConfig, build_problem, initial_point, load_config
from .svg import line_plot_logy

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_BOUND, EXIT_PARTIAL = 0, 1, 2, 3, 4

ESTIMATORS = ("page", "minibatch", "single")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _num(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_trace_csv(trace: RunTrace, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            w.writerow([_num(v) for v in row])


def _scalar_meta(meta: dict) -> dict:
    out = {}
    for k, v in meta.items():
        if isinstance(v, (bool, int, float, str, np.integer, np.floating)):
            out[k] = v.item() if hasattr(v, "item") else v
    return out


def _summary(trace: RunTrace, wall: float) -> dict:
    last = trace.records[-1] if trace.records else None
    return {
        "method": trace.method,
        "status": trace.status,
        "iterations": last.k if last else 0,
        "final_op_norm_true": last.op_norm_true if last else math.nan,
        "final_op_norm_est": last.op_norm_est if last else math.nan,
        "total_queries": trace.cumulative_queries,
        "wall_time_s": wall,
        "meta": _scalar_meta(trace.meta),
    }


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


# -- run plans -----------------------------------------------------------------------


@dataclass
class Plan:
    label: str
    run: Callable  # (seed, eps, budget) -> (u, trace)


def _need(cfg: ExperimentConfig, key: str, section: str = "solver"):
    if key not in getattr(cfg, section):
        raise ConfigError(f"{cfg.line_of(section, None)}: [{section}] {key} is required")
    return getattr(cfg, section)[key]


def make_plan(cfg: ExperimentConfig, problem, method: str, u0, *, estimator: str | None = None,
              eps_required: bool = True) -> Plan:
    """Validate everything a run of ``method`` needs and return a runner."""
    sv = cfg.solver
    scale = sv.get("constant_scale", 1.0)
    if not scale > 0:
        raise cfg.error("solver", "constant_scale", "must be > 0")
    L = sv.get("L")
    if L is not None and not L > 0:
        raise cfg.error("solver", "L", "must be > 0")
    eps0 = sv.get("eps")
    if eps_required and method not in BASELINES:
        eps0 = _need(cfg, "eps")
    if eps0 is not None and not eps0 > 0:
        raise cfg.error("solver", "eps", "must be > 0")
    dist0 = sv.get("dist0")
    if problem.solution is None and dist0 is None and sv.get("max_iters") is None:
        raise ConfigError(f"{cfg.line_of('solver', None)}: [solver] dist0 is required "
                          "when the problem has no known solution")

    if method in BASELINES:
        try:
            base = BaselineConfig(method=method, step=sv.get("step"), batch=sv.get("batch", 1),
                                  budget=sv.get("budget"), max_iters=sv.get("max_iters"))
        except InvalidParameter as err:
            raise cfg.error("solver", "method", str(err)) from None

        def run(seed, eps, budget):
            c = BaselineConfig(method=method, step=base.step, batch=base.batch,
                               budget=budget or base.budget, max_iters=base.max_iters,
                               master_seed=seed)
            return run_baseline(problem, c, u0)

        return Plan(method, run)

    common = dict(L=L, dist0=dist0, constant_scale=scale, budget=sv.get("budget"))
    caps = {k: sv[k] for k in ("s1_cap", "s2_cap") if k in sv}
    eps_probe = eps0 if eps0 is not None else 1.0

    if method.startswith("halpern"):
        if method == "halpern-constrained" and problem.projector is None:
            raise ConfigError(f"{cfg.line_of('problem', 'kind')}: halpern-constrained needs "
                              "[problem] constraint")
        fn = {"halpern": halpern_cocoercive, "halpern-minibatch": halpern_cocoercive_minibatch,
              "halpern-constrained": halpern_cocoercive_constrained}[method]
        try:
            CocoerciveConfig(eps=eps_probe, **common)
        except InvalidParameter as err:
            raise ConfigError(f"{cfg.line_of('solver', None)}: [solver] {err}") from None

        def run(seed, eps, budget):
            c = CocoerciveConfig(eps=eps, max_iters=sv.get("max_iters"),
                                 stop_on_estimate=sv.get("stop_on_estimate", False),
                                 master_seed=seed, **caps,
                                 **{**common, "budget": budget or common["budget"]})
            return fn(problem, c, u0)

        return Plan(method, run)

    Lm = L if L is not None else problem.lipschitz
    eta0 = sv.get("eta0")
    if eta0 is not None:
        try:
            monotone_constants(Lm, eta0)
        except InvalidParameter:
            raise cfg.error("solver", "eta0",
                            f"must satisfy 0 < eta0 <= 1/(3*sqrt(3)*L) = "
                            f"{eta_upper_bound(Lm):.6g} for L = {Lm:g}; got {eta0}") from None
    est = estimator or sv.get("estimator", "page")
    if est not in ESTIMATORS:
        raise cfg.error("solver", "estimator", f"expected one of {', '.join(ESTIMATORS)}")

    if method == "e-halpern":
        def run(seed, eps, budget):
            c = MonotoneConfig(eps=eps, eta0=eta0, max_iters=sv.get("max_iters"),
                               master_seed=seed, estimator=est,
                               stop_on_estimate=sv.get("stop_on_estimate", False), **caps,
                               **{**common, "budget": budget or common["budget"]})
            return e_halpern(problem, c, u0)

        label = "e-halpern" if estimator is None else f"e-halpern-{est}"
        return Plan(label, run)

    mu = sv.get("mu", problem.mu)
    if not mu > 0:
        raise ConfigError(f"{cfg.line_of('solver', 'mu')}: [solver] mu: restarted-e-halpern "
                          f"needs a sharpness constant mu > 0 (got {mu})")
    sharp = dict(restart_rule=sv.get("restart_rule", "scheduled"),
                 log_base=sv.get("log_base", 2.0), max_rounds=sv.get("max_rounds"),
                 inner_max_iters=sv.get("inner_max_iters"), min_round=sv.get("min_round", 1),
                 carry_estimator=sv.get("carry_estimator", True), **caps)
    try:
        SharpConfig(eps=eps_probe, mu=mu, eta0=eta0, **sharp, **common)
    except InvalidParameter as err:
        raise ConfigError(f"{cfg.line_of('solver', None)}: [solver] {err}") from None

    def run(seed, eps, budget):
        c = SharpConfig(eps=eps, mu=mu, eta0=eta0, master_seed=seed, estimator=est, **sharp,
                        **{**common, "budget": budget or common["budget"]})
        return restarted_e_halpern(problem, c, u0)

    return Plan(method, run)


def _setup(args):
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    u0 = initial_point(cfg, problem)
    seed = args.seed if args.seed is not None else cfg.solver.get("seed", 0)
    out = Path(args.out_dir or cfg.output.get("dir", "out"))
    if cfg.path is not None and args.out_dir is None and not out.is_absolute():
        out = cfg.path.parent / out
    return cfg, problem, u0, seed, out


# -- commands ------------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg, problem, u0, seed, out = _setup(args)
    method = _need(cfg, "method")
    plan = make_plan(cfg, problem, method, u0)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        _, trace = plan.run(seed, cfg.solver["eps"], None)
    except (DivergenceError, ScheduleCollapse) as err:
        trace = getattr(err, "trace", None)
        if trace is not None:
            write_trace_csv(trace, out / "trace.csv")
        _err(f"{method} failed: {err}")
        return EXIT_DIVERGED
    wall = time.perf_counter() - t0
    write_trace_csv(trace, out / "trace.csv")
    summary = _summary(trace, wall)
    _write_json(summary, out / "summary.json")
    print(f"{plan.label}: status={trace.status} k={summary['iterations']} "
          f"queries={summary['total_queries']} ||F(u)||={summary['final_op_norm_true']:.6g}")
    return EXIT_OK


def aligned_grid(traces: dict[str, RunTrace], points: int) -> tuple[np.ndarray, dict]:
    """Geometric query grid and, per method, the latest true norm at or below each point."""
    firsts = [t.records[0].queries_cum for t in traces.values() if t.records]
    lasts = [t.cumulative_queries for t in traces.values() if t.records]
    lo, hi = max(1, min(firsts)), max(max(lasts), 2)
    if hi <= lo:
        hi = lo + 1
    grid = np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))
    cols = {}
    for name, t in traces.items():
        q = t.column("queries_cum").astype(np.int64)
        norms = t.op_norms()
        idx = np.searchsorted(q, grid, side="right") - 1
        cols[name] = np.where(idx >= 0, norms[np.maximum(idx, 0)], np.nan)
    return grid, cols


def cmd_compare(args) -> int:
    cfg, problem, u0, seed, out = _setup(args)
    methods = cfg.solver.get("methods")
    if not methods:
        raise ConfigError(f"{cfg.line_of('solver', None)}: [solver] methods is required")
    budget = _need(cfg, "budget")
    estimators = cfg.solver.get("estimators")
    plans, eps_of = [], {}
    for m in methods:
        if m == "e-halpern" and estimators:
            for e in estimators:
                if e not in ESTIMATORS:
                    raise cfg.error("solver", "estimators", f"unknown estimator {e!r}")
                view = cfg.for_method(f"{m}-{e}")
                plans.append(make_plan(view, problem, m, u0, estimator=e))
                eps_of[plans[-1].label] = view.solver.get("eps")
        else:
            view = cfg.for_method(m)
            plans.append(make_plan(view, problem, m, u0))
            eps_of[plans[-1].label] = view.solver.get("eps")
    labels = [p.label for p in plans]
    for label in cfg.overrides:
        if label not in labels:
            raise ConfigError(f"{cfg.line_of(f'method:{label}', None)}: [method:{label}] "
                              f"does not match any compared method ({', '.join(labels)})")
    if len(plans) < 2:
        raise cfg.error("solver", "methods", "a comparison needs at least 2 methods")
    if len(set(labels)) != len(labels):
        raise cfg.error("solver", "methods", "methods must be distinct")
    out.mkdir(parents=True, exist_ok=True)

    def run(plan):
        t0 = time.perf_counter()
        try:
            _, trace = plan.run(seed, eps_of[plan.label], budget)
            return plan.label, trace, time.perf_counter() - t0, None
        except (DivergenceError, ScheduleCollapse) as err:
            return plan.label, getattr(err, "trace", None), time.perf_counter() - t0, err

    workers = cfg.solver.get("workers", 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, plans))
    else:
        results = [run(p) for p in plans]

    traces, summary, failed = {}, {}, []
    for label, trace, wall, err in results:
        if trace is not None:
            write_trace_csv(trace, out / f"trace_{label}.csv")
            traces[label] = trace
            summary[label] = _summary(trace, wall)
        if err is not None:
            failed.append(f"{label}: {err}")
    if traces:
        grid, cols = aligned_grid(traces, cfg.output.get("grid_points", 60))
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["queries", *cols])
            for i, g in enumerate(grid):
                w.writerow([_num(g), *(_num(float(c[i])) for c in cols.values())])
        svg = line_plot_logy(
            {name: (grid.tolist(), c.tolist()) for name, c in cols.items()},
            title=f"{problem.name}: operator norm vs oracle queries",
            xlabel="cumulative oracle queries", ylabel="||F(u)||")
        (out / "comparison.svg").write_text(svg)
    _write_json({"budget": budget, "methods": summary}, out / "summary.json")
    for label, s in summary.items():
        print(f"{label:>24}: queries={s['total_queries']:>10} "
              f"||F(u)||={s['final_op_norm_true']:.6g} ({s['status']})")
    if failed:
        for f in failed:
            _err(f)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_variance_check(args) -> int:
    cfg, problem, u0, seed, out = _setup(args)
    if not problem.oracle.has_true_operator:
        raise ConfigError("variance-check needs a problem with a known mean operator")
    eps = _need(cfg, "eps")
    if not eps > 0:
        raise cfg.error("solver", "eps", "must be > 0")
    reps = cfg.solver.get("reps", 200)
    if reps < 200:
        raise cfg.error("solver", "reps", f"needs at least 200 replications, got {reps}")
    checkpoints = cfg.solver.get("checkpoints", [1, 2, 4, 8, 16])
    if not checkpoints or min(checkpoints) < 1:
        raise cfg.error("solver", "checkpoints", "must be positive integers")
    s1_scale = cfg.solver.get("s1_scale", 1.0)
    if not s1_scale > 0:
        raise cfg.error("solver", "s1_scale", "must be > 0")
    L = cfg.solver.get("L", problem.lipschitz)
    out.mkdir(parents=True, exist_ok=True)
    path = halpern_path(problem.F, u0, max(checkpoints), L)
    rows = estimator_variance_profile(problem.oracle, problem.oracle.spec, eps, path, reps,
                                      checkpoints, seed=seed, s1_scale=s1_scale)
    with open(out / "variance.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "measured", "bound", "allowed", "passed"])
        for r in rows:
            w.writerow([r.k, _num(r.measured), _num(r.bound), _num(r.allowed), _num(r.passed)])
    for r in rows:
        print(f"k={r.k:>3}  measured={r.measured:.6g}  allowed={r.allowed:.6g}  "
              f"{'ok' if r.passed else 'VIOLATED'}")
    bad = [r for r in rows if not r.passed]
    if bad:
        worst = max(bad, key=lambda r: r.measured / r.allowed)
        _err(f"variance bound violated at {len(bad)} checkpoint(s); worst k={worst.k}: "
             f"{worst.measured:.6g} > {worst.allowed:.6g}")
        return EXIT_BOUND
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, problem, u0, seed, out = _setup(args)
    method = _need(cfg, "method")
    grid = _need(cfg, "eps_grid")
    if len(grid) < 3:
        raise cfg.error("solver", "eps_grid", f"needs at least 3 values, got {len(grid)}")
    plan = make_plan(cfg, problem, method, u0, eps_required=False)
    reps = cfg.solver.get("replications", 5)
    try:
        report = measure_query_scaling(lambda _p, eps, s: plan.run(s, eps, None), problem,
                                       grid, reps, seed=seed,
                                       workers=cfg.solver.get("workers", 1))
    except InvalidParameter as err:
        raise cfg.error("solver", "eps_grid", str(err)) from None
    except ScalingFailure as err:
        out.mkdir(parents=True, exist_ok=True)
        err.report.to_csv(out / "scaling.csv")
        err.report.to_json(out / "scaling.json")
        _err(f"sweep incomplete: {err}")
        return EXIT_PARTIAL
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "scaling.csv")
    report.to_json(out / "scaling.json")
    for e, q in zip(report.eps_grid, report.queries):
        print(f"eps={e:<8g} mean queries={q:.6g}")
    print(f"fitted exponent: {report.fitted_exponent:.4f} (r^2 = {report.r_squared:.4f})")
    return EXIT_OK
