import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sepmix.environment import Environment, deepest_trap, potential, sample_env
from sepmix.errors import (
    BadK,
    CapExceeded,
    EmptyRange,
    ShapeMismatch,
)
from sepmix.estimators import (
    EstimateReport,
    _replica_seed,
    estimate_tmix_coupling,
    fit_loglog,
    load_deep_trap_env,
    predicted_exponent,
    sample_coupling_times,
    scaling_run,
    wilson_interval,
    witness_flow,
    witness_leftmost,
    witness_mass,
)
from sepmix.law import LawSpec, lambda_root

LAW = LawSpec.two_point(0.25, 0.3)
FLAT2 = Environment.from_omega([0.5, 0.5])


def test_wilson_frozen_and_boundary_pinned():
    lo, hi = wilson_interval(3, 10)
    assert lo == pytest.approx(0.10779126740630099, rel=1e-12)
    assert hi == pytest.approx(0.6032218525388546, rel=1e-12)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    with pytest.raises(ShapeMismatch):
        wilson_interval(1, 0)
    with pytest.raises(ShapeMismatch):
        wilson_interval(11, 10)


@given(st.integers(min_value=1, max_value=1000), st.data())
def test_wilson_contains_the_frequency(trials, data):
    successes = data.draw(st.integers(min_value=0, max_value=trials))
    lo, hi = wilson_interval(successes, trials)
    p = successes / trials
    assert 0.0 <= lo <= p <= hi <= 1.0


def test_estimate_report_validates():
    rep = EstimateReport(point=0.5, ci=(0.4, 0.6), replicas=10, seed=1,
                         method="x")
    assert rep.timeouts == 0
    with pytest.raises(ShapeMismatch):
        EstimateReport(point=0.5, ci=(0.4, 0.6), replicas=0, seed=1,
                       method="x")
    with pytest.raises(ShapeMismatch):
        EstimateReport(point=0.7, ci=(0.4, 0.6), replicas=10, seed=1,
                       method="x")


def test_replica_seeds_are_stable_and_distinct():
    assert _replica_seed(1, 2, 3) == _replica_seed(1, 2, 3)
    seeds = {_replica_seed(9, 7, r) for r in range(100)}
    assert len(seeds) == 100


def test_coupling_times_censor_at_the_cap():
    taus = sample_coupling_times(FLAT2, 1, 5, seed=11, cap=0.0)
    assert np.all(np.isinf(taus))
    taus = sample_coupling_times(FLAT2, 1, 200, seed=11, cap=1e7)
    assert np.all(np.isfinite(taus)) and np.all(taus > 0)
    # memoryless merge at rate 1: the sample mean sits near 1
    sem = taus.std(ddof=1) / math.sqrt(taus.size)
    assert abs(taus.mean() - 1.0) <= 3.0 * sem


def test_tmix_estimate_brackets_the_flat_pair():
    # two sites, omega = 1/2: the extremal pair merges at rate one, so
    # the eps = 1/4 crossing sits at ln 4
    rep = estimate_tmix_coupling(FLAT2, 1, 0.25, 4000, seed=31)
    assert abs(rep.point - math.log(4.0)) <= 0.15
    assert rep.ci[0] <= rep.point <= rep.ci[1]
    assert rep.timeouts == 0 and rep.method == "coupling"
    again = estimate_tmix_coupling(FLAT2, 1, 0.25, 4000, seed=31)
    assert again == rep
    with pytest.raises(ShapeMismatch):
        estimate_tmix_coupling(FLAT2, 1, 0.0, 10, seed=1)
    with pytest.raises(CapExceeded):
        estimate_tmix_coupling(FLAT2, 1, 0.01, 50, seed=1, cap=0.2)


def test_deep_trap_fixture_is_the_planted_block():
    env = load_deep_trap_env()
    assert env.n == 256
    assert set(np.round(env.omega, 6)) == {0.25, 0.75}
    trap = deepest_trap(potential(env), 1, env.n // 4)
    assert trap.depth == pytest.approx(11.0 * math.log(3.0), rel=1e-12)
    predicted = 3.0 ** 11 / (2.0 * math.e) - 1.0
    assert math.exp(trap.depth) / (2.0 * math.e) - 1.0 == pytest.approx(
        predicted, rel=1e-10)


def test_witness_leftmost_on_the_planted_block():
    env = load_deep_trap_env()
    w0 = witness_leftmost(env, 3, 0.0, 50, seed=41)
    assert w0.report.point == 1.0
    assert w0.blocking_time == pytest.approx(3.0 ** 11 / (2.0 * math.e) - 1.0,
                                             rel=1e-10)
    # far below the blocking time the leftmost particle has not escaped
    w5 = witness_leftmost(env, 3, 5.0, 200, seed=41)
    assert w5.report.point >= 0.9
    with pytest.raises(ShapeMismatch):
        witness_leftmost(env, 3, -1.0, 10, seed=1)


def test_witness_flow_bound_and_domination():
    env = sample_env(LAW, 8, seed=19)
    f0 = witness_flow(env, 2, 5, 0.0, 50, seed=43)
    assert f0.report.point == 0.0
    assert f0.bound == pytest.approx(1.0 - f0.eps)
    assert max(3, (8 + 1) // 2) <= f0.x2 <= f0.y2 == 5
    f6 = witness_flow(env, 2, 5, 6.0, 400, seed=43)
    assert f6.bound == pytest.approx(1.0 - 4.0 * f6.report.point / 2 - f6.eps,
                                     rel=1e-12)
    assert f6.absorbed_mean >= f6.report.point
    with pytest.raises(ShapeMismatch):
        witness_flow(env, 2, 8, 1.0, 10, seed=1)
    with pytest.raises(EmptyRange):
        witness_flow(env, 6, 5, 1.0, 10, seed=1)


def test_witness_mass_floor_and_drift():
    env = sample_env(LAW, 8, seed=19)
    m0 = witness_mass(env, 2, 0.0, 50, seed=47)
    assert m0.report.point == 0.0
    assert m0.mean_m == 3.0 and m0.markov_bound == 0.0
    assert m0.drift_bound == 3.0
    assert m0.median_m >= m0.mean_m
    m4 = witness_mass(env, 2, 4.0, 400, seed=47)
    assert m4.mean_m <= m4.drift_bound
    assert m4.markov_bound == pytest.approx(8.0 / 6.0)


def test_predicted_exponent_regimes():
    lam = 1.0 / 1.2966069431192224
    assert predicted_exponent(math.inf, 0.5) == 1.0
    assert predicted_exponent(lam, 0.0) == pytest.approx(1.2966069431192224)
    assert predicted_exponent(lam, 0.9) == pytest.approx(
        0.9 + 0.5 * 1.2966069431192224)


def test_fit_loglog_recovers_a_power_law():
    ns = [8, 16, 32, 64]
    slope, se = fit_loglog(ns, [3.0 * n ** 2.5 for n in ns])
    assert slope == pytest.approx(2.5, rel=1e-12)
    assert se <= 1e-12
    slope2, se2 = fit_loglog([4, 8], [1.0, 2.0])
    assert slope2 == pytest.approx(1.0) and se2 == 0.0
    with pytest.raises(ShapeMismatch):
        fit_loglog([4], [1.0])


def test_scaling_run_reproducible():
    res = scaling_run(LAW, 0.0, [8, 6, 4], 0.3, 300, seed=53)
    assert [r.n for r in res.rows] == [4, 6, 8]
    assert all(r.k == 1 and not r.censored for r in res.rows)
    assert all(r.lambda_ref == lambda_root(LAW) for r in res.rows)
    assert all(r.predicted_exponent == predicted_exponent(r.lambda_ref, 0.0)
               for r in res.rows)
    assert math.isfinite(res.slope)
    again = scaling_run(LAW, 0.0, [4, 6, 8], 0.3, 300, seed=53)
    assert again.rows == res.rows and again.slope == res.slope


def test_scaling_run_marks_censored_rows():
    res = scaling_run(LAW, 0.0, [4, 6], 0.01, 40, seed=53, cap=0.2)
    assert all(r.censored and math.isnan(r.t_hat) for r in res.rows)
    assert all(r.timeouts == 40 for r in res.rows)
    assert math.isnan(res.slope)


def test_scaling_run_rejects_dense_filling():
    with pytest.raises(BadK):
        scaling_run(LAW, 1.0, [4, 6], 0.3, 10, seed=1)
