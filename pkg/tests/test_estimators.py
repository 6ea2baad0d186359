import logging
import math

import numpy as np
import pytest

from stochhalpern._rng import SeedStream
from stochhalpern.estimators import (InvalidParameter, ceil_int, minibatch_estimate,
                                     minibatch_schedule, page_init, page_schedule, page_step,
                                     refresh_batch)
from stochhalpern.oracle import FiniteSumOracle, GaussianOracle, OracleSpec


def identity_oracle(sigma, dim=2):
    return GaussianOracle(lambda u: u, OracleSpec(sigma=sigma, lipschitz=1.0, dim=dim))


ROWS = np.array([[1.0, 0.0], [0.0, 2.0]])


def rows_oracle():
    def comp(idx, pts):
        a = ROWS[idx]
        return (pts @ a.T).T[:, :, None] * a[:, None, :]
    return FiniteSumOracle(comp, 2, OracleSpec(sigma=0.0, lipschitz=8.0, dim=2))


# -- schedule -------------------------------------------------------------------------

def test_schedule_hand_example():
    p, s1, s2 = page_schedule(3, OracleSpec(1.0, 2.0, 2), 0.1, 0.04)
    assert p == 0.5
    assert (s1, s2) == (1600, 512)


def test_schedule_noiseless_first_step():
    p, s1, s2 = page_schedule(1, OracleSpec(0.0, 1.0, 2), 0.1, 0.0)
    assert (p, s1, s2) == (1.0, 1, 1)


def test_schedule_shifted_convention():
    spec = OracleSpec(1.0, 1.0, 2)
    assert page_schedule(1, spec, 0.1, 0.0, shifted=True)[0] == 1.0
    assert page_schedule(2, spec, 0.1, 0.0, shifted=True)[0] == 1.0
    assert page_schedule(4, spec, 0.1, 0.0, shifted=True)[0] == 0.5
    assert page_schedule(4, spec, 0.1, 0.0)[0] == 0.4


def test_schedule_rejects_bad_inputs():
    spec = OracleSpec(1.0, 1.0, 2)
    for eps in (0.0, -1.0):
        with pytest.raises(InvalidParameter):
            page_schedule(1, spec, eps, 0.0)
    with pytest.raises(InvalidParameter):
        page_schedule(0, spec, 0.1, 0.0)
    with pytest.raises(InvalidParameter):
        page_schedule(1, spec, 0.1, -1.0)


def test_s2_cap_clamps_and_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="stochhalpern.estimators"):
        _, _, s2 = page_schedule(1, OracleSpec(0.0, 1.0, 2), 1e-6, 1.0, s2_cap=1000)
    assert s2 == 1000
    assert any("S2" in r.message for r in caplog.records)


def test_s1_cap_clamps():
    assert refresh_batch(1.0, 1e-6, cap=50) == 50
    assert refresh_batch(1.0, 0.1) == 800


def test_constant_scale_multiplies_batches():
    spec = OracleSpec(1.0, 2.0, 2)
    assert page_schedule(3, spec, 0.1, 0.04, scale=0.25)[1:] == (400, 128)


def test_ceil_int_ignores_float_noise():
    assert ceil_int(800.0000000000001) == 800
    assert ceil_int(800.2) == 801
    assert ceil_int(8 * 1.0**2 / 0.1**2) == 800


# -- init and step --------------------------------------------------------------------

def test_init_consumes_schedule_queries():
    o = identity_oracle(1.0)
    s1 = refresh_batch(1.0, 0.1)
    state = page_init([0.0, 0.0], s1, o, eps=0.1)
    assert s1 == 800
    assert state.cumulative_queries == 800 == o.queries
    assert state.k == 0
    np.testing.assert_array_equal(state.anchor, [0.0, 0.0])


def test_init_zero_noise_exact():
    state = page_init([1.0, -3.0], 1, identity_oracle(0.0), eps=0.1)
    np.testing.assert_array_equal(state.estimate, [1.0, -3.0])


def test_init_rejects_empty_batch():
    with pytest.raises(InvalidParameter):
        page_init([0.0, 0.0], 0, identity_oracle(0.0), eps=0.1)


def test_init_variance_meets_hypothesis():
    # sigma^2 / S1 = 1/800 sits exactly at eps^2 / 8, so allow the Monte-Carlo slack.
    o = identity_oracle(1.0)
    u0 = np.array([0.5, 0.5])
    errs = [np.sum((page_init(u0, 800, o, eps=0.1, master_seed=r).estimate - u0) ** 2)
            for r in range(200)]
    assert np.mean(errs) <= 0.1**2 / 8 * (1 + 5 / math.sqrt(200))


@pytest.mark.parametrize("force", ["refresh", "recursive", None])
def test_zero_noise_step_is_exact(force):
    o = identity_oracle(0.0)
    state = page_init([1.0, 0.0], 1, o, eps=0.1)
    est, _, state = page_step(state, [0.25, -2.0], o, force=force)
    np.testing.assert_allclose(est, [0.25, -2.0], atol=1e-12)


def test_forced_refresh_variance():
    o = identity_oracle(1.0)
    point = np.array([0.3, -0.1])
    errs = []
    for r in range(200):
        state = page_init([0.0, 0.0], 1, o, eps=0.1, master_seed=r)
        est, used, _ = page_step(state, point, o, force="refresh", schedule=(1.0, 1600, 1))
        assert used == 1600
        errs.append(np.sum((est - point) ** 2))
    assert np.mean(errs) <= 0.1**2 * 1.0 / 8


def test_forced_recursive_variance_recursion():
    o = rows_oracle()
    u0, u1 = np.array([1.0, 1.0]), np.array([1.2, 0.9])
    dist_sq = float(np.sum((u1 - u0) ** 2))
    S0, S2, L = 20, 10, 8.0
    before, after = [], []
    for r in range(400):
        state = page_init(u0, S0, o, eps=0.1, master_seed=r)
        before.append(np.sum((state.estimate - o.true_value(u0)) ** 2))
        est, used, _ = page_step(state, u1, o, force="recursive", schedule=(0.5, 1, S2))
        assert used == 2 * S2
        after.append(np.sum((est - o.true_value(u1)) ** 2))
    slack = 1 + 5 / math.sqrt(400)
    assert np.mean(after) <= slack * (np.mean(before) + L**2 * dist_sq / S2)


def test_step_bookkeeping():
    o = identity_oracle(1.0)
    state = page_init([0.0, 0.0], 10, o, eps=0.5)
    total = state.cumulative_queries
    for k in range(1, 6):
        _, used, state = page_step(state, [0.1 * k, 0.0], o)
        total += used
        assert state.k == k
        assert state.cumulative_queries == total == o.queries
        np.testing.assert_array_equal(state.anchor, [0.1 * k, 0.0])
        if state.last_branch == "refresh":
            assert used == state.last_S1
        else:
            assert used == 2 * state.last_S2


def test_branch_frequency_matches_probability():
    o = identity_oracle(0.0, dim=1)
    base = page_init([0.0], 1, o, eps=1.0)
    trials, p = 10_000, 2.0 / 3.0  # k = 2 under p = 2/(k+1)
    master = SeedStream.from_seed(99)
    hits = 0
    for t in range(trials):
        state = base.__class__(**{**base.__dict__, "k": 1, "stream": master.spawn(t)})
        _, _, new = page_step(state, [0.0], o, schedule=(p, 1, 1))
        hits += new.last_branch == "refresh"
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(hits / trials - p) <= 3 * se


def test_unknown_branch_rejected():
    o = identity_oracle(0.0)
    state = page_init([0.0, 0.0], 1, o, eps=0.1)
    with pytest.raises(InvalidParameter):
        page_step(state, [1.0, 0.0], o, force="sideways")


# -- mini-batch -----------------------------------------------------------------------

def test_minibatch_schedule_example():
    assert minibatch_schedule(3, 2.0, 0.5) == 64
    assert minibatch_schedule(9, 1.0, 0.1) == 1000
    assert minibatch_schedule(0, 0.0, 0.1) == 1


def test_minibatch_single_sample_and_zero_noise():
    est, used = minibatch_estimate([1.0, 2.0], 1, identity_oracle(1.0), seed=4)
    assert used == 1 and est.shape == (2,)
    est, used = minibatch_estimate([1.0, 2.0], 17, identity_oracle(0.0))
    assert used == 17
    np.testing.assert_allclose(est, [1.0, 2.0], atol=1e-14)
    with pytest.raises(InvalidParameter):
        minibatch_estimate([1.0, 2.0], 0, identity_oracle(0.0))
