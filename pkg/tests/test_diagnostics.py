import csv
import json

import numpy as np
import pytest

from stochhalpern.diagnostics import (InsufficientData, ScalingFailure, fit_loglog,
                                      fit_rate_exponent, halpern_path,
                                      estimator_variance_profile, measure_query_scaling,
                                      potential_cocoercive, potential_monotone)
from stochhalpern.estimators import InvalidParameter
from stochhalpern.problems import bilinear_problem, identity_problem
from stochhalpern.solvers import (CocoerciveConfig, DivergenceError, MonotoneConfig,
                                  e_halpern, eta_schedule, halpern_cocoercive,
                                  monotone_constants)


# -- potentials -----------------------------------------------------------------------

def test_cocoercive_potential_hand_case():
    assert potential_cocoercive(1, [0.5, 0.0], [1.0, 0.0], [0.5, 0.0], 1.0) == -0.25
    assert potential_cocoercive(5, [0.3, 0.1], [0.3, 0.1], [0.0, 0.0], 2.0) == 0.0


def test_cocoercive_potential_nonincreasing_noiseless():
    p = identity_problem(2)
    u0 = np.array([1.0, 0.0])
    _, tr = halpern_cocoercive(p, CocoerciveConfig(eps=0.1, max_iters=100,
                                                   record_iterates=True), u0)
    C = [potential_cocoercive(k, tr.iterates[k], u0, p.F(tr.iterates[k]), 1.0)
         for k in range(1, 101)]
    assert all(c <= C[0] + 1e-15 for c in C)


def test_monotone_potential_hand_case():
    v = potential_monotone(1, [1, 1], [1, 1], [1, 1], [1, -1], 0.15, 1.0, B0=1.0)
    assert v == pytest.approx(0.9, rel=1e-14)
    assert potential_monotone(3, [0, 0], [0, 0], [0, 0], [0, 0], 0.1, 1.0) == 0.0


def test_monotone_potential_nonincreasing_noiseless():
    p = bilinear_problem()
    u0 = np.array([1.0, 1.0])
    _, tr = e_halpern(p, MonotoneConfig(eps=0.01, max_iters=101, record_iterates=True), u0)
    c = monotone_constants(p.lipschitz, tr.meta["eta0"])
    etas, eta = [c.eta0], c.eta0
    for k in range(1, 102):
        eta = eta_schedule(eta, k, c.M)
        etas.append(eta)
    us, vs = tr.iterates, tr.estimates  # record k stores u_k and v_{k-1}
    V = [potential_monotone(k, us[k], vs[k], u0, p.F(us[k]), etas[k], p.lipschitz)
         for k in range(1, 101)]
    assert all(b <= a + 1e-12 for a, b in zip(V, V[1:]))


def test_potentials_reject_bad_inputs():
    with pytest.raises(InvalidParameter):
        potential_cocoercive(0, [0], [0], [0], 1.0)
    with pytest.raises(InvalidParameter):
        potential_monotone(1, [0], [0], [0], [0], 0.1, 1.0, B0=0.0)


# -- rate fits ------------------------------------------------------------------------

def test_fit_on_exact_sequences():
    k = np.arange(0, 200)
    inv = np.r_[np.nan, 1.0 / k[1:]]
    slope, r2 = fit_rate_exponent(inv)
    assert slope == pytest.approx(-1.0, abs=1e-9) and r2 == pytest.approx(1.0)
    slope, _ = fit_rate_exponent(np.full(200, 3.0))
    assert slope == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_fit_recovers_power_laws(alpha):
    k = np.arange(1, 500, dtype=float)
    assert round(fit_loglog(k, k**-alpha)[0], 3) == -alpha


def test_fit_burn_in_and_insufficient_data():
    with pytest.raises(InsufficientData):
        fit_rate_exponent(np.ones(20))  # k = 0 is dropped, 19 points remain
    with pytest.raises(InsufficientData):
        fit_rate_exponent(np.ones(100), burn_in=90)


def test_fit_from_noiseless_run():
    _, tr = halpern_cocoercive(identity_problem(2), CocoerciveConfig(eps=0.1, max_iters=500),
                               [1.0, 0.0])
    slope, _ = fit_rate_exponent(tr)
    assert -1.1 <= slope <= -0.9


# -- scaling --------------------------------------------------------------------------

def _deterministic_solver(problem, eps, seed):
    return halpern_cocoercive(problem, CocoerciveConfig(eps=eps, master_seed=seed,
                                                        constant_scale=0.1), [1.0, 0.0])


def test_deterministic_scaling_is_linear():
    rep = measure_query_scaling(_deterministic_solver, identity_problem(2),
                                [0.4, 0.2, 0.1, 0.05], 5)
    assert 0.8 <= rep.fitted_exponent <= 1.2
    assert rep.r_squared > 0.99


def test_report_totals_match_traces_and_workers():
    p = identity_problem(2, sigma=1.0)

    def solver(problem, eps, seed):
        return halpern_cocoercive(problem, CocoerciveConfig(eps=eps, master_seed=seed,
                                                            constant_scale=0.05), [1.0, 0.0])
    grid = [0.8, 0.4, 0.2]
    a = measure_query_scaling(solver, p, grid, 5, seed=3)
    b = measure_query_scaling(solver, p, grid, 5, seed=3, workers=3)
    assert a.queries == b.queries and a.fitted_exponent == b.fitted_exponent
    for eps, mean in zip(a.eps_grid, a.queries):
        cells = [c for c in a.cells if c.eps == eps]
        for c in cells:
            _, tr = solver(p, eps, c.seed)
            assert tr.cumulative_queries == c.queries
        assert mean == np.mean([c.queries for c in cells])


def test_scaling_validation():
    p = identity_problem(2)
    with pytest.raises(InvalidParameter):
        measure_query_scaling(_deterministic_solver, p, [0.4, 0.2], 5)
    with pytest.raises(InvalidParameter):
        measure_query_scaling(_deterministic_solver, p, [0.4, 0.3, 0.2], 5)
    with pytest.raises(InvalidParameter):
        measure_query_scaling(_deterministic_solver, p, [0.4, 0.2, 0.1], 4)


def test_scaling_failure_carries_partial_report():
    def flaky(problem, eps, seed):
        if eps < 0.15:
            raise DivergenceError(3)
        return _deterministic_solver(problem, eps, seed)
    with pytest.raises(ScalingFailure) as info:
        measure_query_scaling(flaky, identity_problem(2), [0.4, 0.2, 0.1], 5)
    rep = info.value.report
    assert len(info.value.failures) == 5
    assert len(rep.cells) == 10 and np.isnan(rep.queries[-1])


def test_report_serialization_round_trips(tmp_path):
    rep = measure_query_scaling(_deterministic_solver, identity_problem(2), [0.4, 0.2, 0.1], 5)
    rep.to_csv(tmp_path / "s.csv")
    rep.to_json(tmp_path / "s.json")
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert len(rows) == 15
    for row, cell in zip(rows, rep.cells):
        assert float(row["eps"]) == cell.eps
        assert float(row["final_norm"]) == cell.final_norm
        assert int(row["queries"]) == cell.queries
    summary = json.loads((tmp_path / "s.json").read_text())
    assert summary["fitted_exponent"] == rep.fitted_exponent


# -- variance profile -----------------------------------------------------------------

def test_variance_profile_noiseless_is_zero():
    p = identity_problem(10, sigma=0.0)
    path = halpern_path(p.F, np.ones(10), 16, 1.0)
    rows = estimator_variance_profile(p.oracle, p.oracle.spec, 0.2, path, 200, seed=1)
    assert [r.k for r in rows] == [1, 2, 4, 8, 16]
    assert all(r.measured <= 1e-20 and r.passed for r in rows)


def test_halpern_path_is_noiseless_recursion():
    path = halpern_path(lambda u: u, [2.0, 0.0], 10, 1.0)
    for k, u in enumerate(path):
        np.testing.assert_allclose(u, [2.0 / (k + 1), 0.0], rtol=1e-14)
