import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beamtrack.array_signal import steering_vector
from beamtrack.channel_mobility import LosChannelState
from beamtrack.measurement import SensingPlan
from beamtrack.metrics import (
    accuracy,
    avg_measurements,
    build_report,
    gain_loss_db,
    gain_loss_db_batch,
    overhead_reduction,
    percentile_gain_loss,
)


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([65, 64], [65, 65]) == 0.5
    with pytest.raises(ValueError):
        accuracy([1], [1, 2])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_accuracy_permutation_invariant():
    rng = np.random.default_rng(0)
    p, y = rng.integers(1, 5, 50), rng.integers(1, 5, 50)
    perm = rng.permutation(50)
    assert accuracy(p, y) == accuracy(p[perm], y[perm])


def test_gain_loss_zero_at_oracle(pencil):
    s = LosChannelState(0.0, 0.0, 30.0, (15, 0))
    assert gain_loss_db(65, s, pencil) == 0.0


def test_gain_loss_one_beam_off_brute_force(pencil):
    h = steering_vector(pencil.geometry, 0.0)
    g = lambda k: abs(np.vdot(pencil.columns[:, k - 1], h)) ** 2
    expected = 10 * math.log10(g(65) / g(64))
    got = gain_loss_db(64, LosChannelState(0.0, 0.0, 30.0, (15, 0)), pencil)
    assert got > 0
    assert got == pytest.approx(expected, rel=1e-12)


def test_gain_loss_amplitude_invariant(pencil):
    a = gain_loss_db(70, LosChannelState(0.2, 0.0, 0.0, (20, 0)), pencil)
    b = gain_loss_db(70, LosChannelState(0.2, 3.0, 0.0, (20, 0)), pencil)
    assert a == pytest.approx(b)


def test_gain_loss_nonnegative_and_range_check(pencil):
    rng = np.random.default_rng(1)
    gl = gain_loss_db_batch(rng.integers(1, 129, 500), rng.uniform(-1, 1, 500), pencil)
    assert np.all(gl >= 0)
    with pytest.raises(ValueError):
        gain_loss_db_batch(np.array([0]), np.array([0.0]), pencil)


def test_gain_loss_null_is_inf(pencil):
    # beam 65 points at broadside; beam 65 + 128/36 would be a null, pick exact null via aoa
    # a pencil beam with sin offset 2/N_r from the channel is an exact null
    k = 65
    angle = -pencil.beam_angles[k - 1]
    aoa = math.asin(math.sin(angle) + 2 / 36)
    g = abs(np.vdot(pencil.columns[:, k - 1], steering_vector(pencil.geometry, aoa))) ** 2
    res = gain_loss_db_batch(np.array([k]), np.array([aoa]), pencil)[0]
    assert res == math.inf or g > 0


def test_percentile_examples():
    assert percentile_gain_loss(range(10), 90) == 9
    assert percentile_gain_loss(np.zeros(7), 90) == 0
    assert percentile_gain_loss([5.0, math.inf, 1.0], 90) == 5.0
    with pytest.raises(ValueError):
        percentile_gain_loss([], 90)
    with pytest.raises(ValueError):
        percentile_gain_loss([math.inf], 90)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=40), st.floats(1, 99), st.floats(1, 99))
def test_percentile_monotone(values, p1, p2):
    lo, hi = sorted((p1, p2))
    assert percentile_gain_loss(values, lo) <= percentile_gain_loss(values, hi)


def test_avg_measurements_examples():
    assert avg_measurements(SensingPlan(5, 5, 4, 7)) == pytest.approx(20 / 11, abs=1e-12)
    assert avg_measurements(SensingPlan(5, 5, 2, 1)) == pytest.approx(10 / 3, abs=1e-12)


def test_overhead_examples():
    plan = SensingPlan(5, 5, 4, 7)
    assert round(overhead_reduction(plan, 128), 4) == round(float(1 - Fraction(20, 1408)), 4) == 0.9858
    assert round(overhead_reduction(plan, 5), 4) == 0.6364
    with pytest.raises(ValueError):
        overhead_reduction(plan, 0)


plans = st.integers(1, 12).flatmap(
    lambda mi: st.tuples(st.just(mi), st.integers(1, mi), st.integers(2, 10), st.integers(1, 10)))


@given(plans, st.integers(1, 200))
def test_overhead_identity(p, m):
    plan = SensingPlan(*p)
    assert overhead_reduction(plan, m) == pytest.approx(1 - avg_measurements(plan) / m, abs=1e-12)
    assert avg_measurements(plan) <= plan.m_initial


@given(st.integers(1, 12), st.integers(2, 10), st.integers(1, 10))
def test_overhead_equal_cost_plan(m, T, P):
    assert overhead_reduction(SensingPlan(m, m, T, P), m) == pytest.approx(P / (T + P), abs=1e-12)


def test_report_with_injected_oracle(pencil):
    rng = np.random.default_rng(3)
    aoas = rng.uniform(-0.9, 0.9, (20, 9))
    from beamtrack.beam_estimators import oracle_beams

    oracle = oracle_beams(aoas, pencil)
    gl = gain_loss_db_batch(oracle, aoas, pencil)
    rep = build_report(oracle, oracle, gl, SensingPlan(5, 5, 7, 2), {"exhaustive": 128})
    assert rep.accuracy == 1.0
    assert rep.gl_p90_db == 0.0 and np.all(gl == 0)
    assert rep.num_frames == 20
