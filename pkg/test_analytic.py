import math

import numpy as np
import pytest

from analytic import (
    ADAPTATION_MIN_TIPS,
    MODE_MONTE_CARLO,
    SWITCH_AT_CONFIRMATION,
    WeightCurve,
    adaptation_period,
    confirmation_delay,
    expected_tip_count,
    expected_weight,
    expected_weight_h2lr,
    expected_weight_hr,
    expected_weight_l2hr,
    expected_weight_lr,
    h2lr_distribution,
    h2lr_expected_weights,
    h2lr_first_passage,
    simulate_h2lr_chain,
    simulate_h2lr_delay,
    tip_drift,
    tip_equilibrium,
)
from core import derive_stream
from exceptions import AdaptationUndefinedError, InvalidThresholdError
from models import LoadRegime, NetworkParams

PARAMS = NetworkParams()

def total_variation(a, b) -> float:
    size = max(len(a), len(b))
    a = np.pad(np.asarray(a, dtype=float), (0, size - len(a)))
    b = np.pad(np.asarray(b, dtype=float), (0, size - len(b)))
    return 0.5 * float(np.abs(a - b).sum())

def test_tip_equilibrium():
    assert tip_equilibrium(50, 1) == 100
    assert tip_equilibrium(0.5, 1) == 1
    assert tip_equilibrium(3.0, 2.0) == tip_equilibrium(6.0, 1.0)

def test_tip_equilibrium_is_fixed_point_of_drift():
    assert tip_drift(50.0, 50.0) == pytest.approx(1.0)
    assert tip_drift(80.0, 50.0) > 1.0
    assert tip_drift(20.0, 50.0) < 1.0

def test_adaptation_period_constants():
    t0, w_t0 = adaptation_period(100.0, 1.0)
    assert w_t0 == pytest.approx(142.045454, abs=1e-5)
    assert t0 == pytest.approx(12.11, abs=0.01)

def test_adaptation_period_inverse():
    t0, _ = adaptation_period(ADAPTATION_MIN_TIPS * math.exp(0.352), 1.0)
    assert t0 == pytest.approx(1.0, abs=1e-12)

def test_adaptation_period_undefined_for_few_tips():
    with pytest.raises(AdaptationUndefinedError):
        adaptation_period(1.4, 1.0)

def test_hr_weight_curve():
    t0, w_t0 = adaptation_period(100.0, 1.0)
    assert expected_weight_hr(0.0, PARAMS) == 2.0
    assert expected_weight_hr(t0, PARAMS) == pytest.approx(142.045, abs=1e-3)
    assert expected_weight_hr(t0 + 1.0, PARAMS) == pytest.approx(192.045, abs=1e-3)

def test_hr_weight_curve_continuous_at_t0():
    t0, w_t0 = adaptation_period(100.0, 1.0)
    left = 2.0 * math.exp(0.352 * t0)
    assert abs(left - w_t0) <= 1e-9
    assert abs(expected_weight_hr(t0 + 1e-12, PARAMS) - expected_weight_hr(t0, PARAMS)) <= 1e-9

def test_lr_weight_curve():
    assert expected_weight_lr(0.0, 0.5) == 1.0
    assert expected_weight_lr(98.0, 0.5) == 50.0
    assert expected_weight_lr(30.0, 0.5) - expected_weight_lr(10.0, 0.5) == pytest.approx(0.5 * 20.0)

def test_h2lr_distribution_first_step():
    state = h2lr_distribution(1, 100)
    assert state.probability(2) == pytest.approx(0.02)
    assert state.probability(1) == pytest.approx(0.98)
    assert state.tip_count == 99

def test_h2lr_distribution_forced_approval_at_two_tips():
    state = h2lr_distribution(99, 100)
    assert state.probability(1) == 0.0
    assert state.tip_count == 1

def test_h2lr_distribution_normalized_and_lattice():
    tip_count = 100
    for k in range(0, 501):
        state = h2lr_distribution(k, tip_count)
        assert abs(state.total() - 1.0) <= 1e-12
        assert state.tip_count == (tip_count - k if k <= tip_count - 1 else 1)
        support = [w for w, p in enumerate(state.weights) if p > 0.0]
        assert min(support) >= 1 and max(support) <= k + 1
        assert all(l == state.tip_count for _, l in state.mass)

def test_h2lr_expected_weight_increments():
    tip_count = 50
    table = h2lr_expected_weights(120, tip_count)
    increments = np.diff(table)
    assert np.all(increments[: tip_count - 1] >= 0.0)
    assert np.all(increments[: tip_count - 1] <= 1.0)
    assert np.allclose(increments[tip_count - 1:], 1.0)
    for k in (0, 10, 49, 80):
        assert table[k] == pytest.approx(h2lr_distribution(k, tip_count).expected_weight(), abs=1e-9)

def test_h2lr_weight_curve_shape():
    assert expected_weight_h2lr(0.0, PARAMS) == 1.0
    assert expected_weight_h2lr(20.0, PARAMS) < expected_weight_lr(20.0, 0.5)
    late = expected_weight_h2lr(600.0, PARAMS) - expected_weight_h2lr(500.0, PARAMS)
    assert late == pytest.approx(0.5 * 100.0)

def test_l2hr_weight_curve():
    assert expected_weight_l2hr(0.0, 50.0) == 1.0
    assert expected_weight_l2hr(10 / 50.0, 50.0) == 11.0
    assert expected_weight_l2hr(1.0, 50.0) == 51.0
    assert expected_weight_l2hr(1.0, 50.0) > expected_weight_hr(1.0, PARAMS)
    assert expected_weight_hr(1.0, PARAMS) == pytest.approx(2.844, abs=1e-3)

def test_monte_carlo_time_mapping():
    stream = derive_stream(3, 0, "mapping")
    value = expected_weight_l2hr(1.0, 50.0, mode=MODE_MONTE_CARLO, stream=stream, samples=20000)
    assert value == pytest.approx(51.0, abs=4.5 * math.sqrt(50.0 / 20000))
    h2lr = expected_weight_h2lr(100.0, PARAMS, mode=MODE_MONTE_CARLO, stream=stream, samples=20000)
    assert h2lr == pytest.approx(expected_weight_h2lr(100.0, PARAMS), rel=0.1)

def test_switch_at_confirmation_falls_back_to_steady_regime():
    for t in (0.0, 5.0, 40.0):
        assert expected_weight(t, LoadRegime.H2LR, PARAMS, SWITCH_AT_CONFIRMATION) == expected_weight_hr(t, PARAMS)
        assert expected_weight(t, LoadRegime.L2HR, PARAMS, SWITCH_AT_CONFIRMATION) == expected_weight_lr(t, 0.5)
    assert confirmation_delay(50, LoadRegime.H2LR, PARAMS, SWITCH_AT_CONFIRMATION) == confirmation_delay(
        50, LoadRegime.HR, PARAMS
    )

def test_weight_curve_breakpoints_and_monotonicity():
    curve = WeightCurve(LoadRegime.HR, PARAMS)
    assert curve.breakpoints["W_t0"] == pytest.approx(142.045, abs=1e-3)
    assert WeightCurve(LoadRegime.LR, PARAMS).breakpoints == {}
    times = [float(t) for t in range(0, 101)]
    for regime in LoadRegime:
        values = WeightCurve(regime, PARAMS).evaluate(times)
        assert values[0] >= 1.0
        assert all(b >= a for a, b in zip(values, values[1:]))

def test_confirmation_delay_closed_forms():
    assert confirmation_delay(50, LoadRegime.LR, PARAMS) == 98.0
    assert confirmation_delay(50, LoadRegime.L2HR, PARAMS) == pytest.approx(0.98)
    assert confirmation_delay(50, LoadRegime.HR, PARAMS) == pytest.approx(math.log(25) / 0.352)
    assert confirmation_delay(100, LoadRegime.HR, PARAMS) == pytest.approx(math.log(50) / 0.352)
    t0, w_t0 = adaptation_period(100.0, 1.0)
    assert confirmation_delay(200, LoadRegime.HR, PARAMS) == pytest.approx(t0 + (200 - w_t0) / 50.0)

def test_confirmation_delay_threshold_check():
    with pytest.raises(InvalidThresholdError):
        confirmation_delay(1, LoadRegime.LR, PARAMS)

def test_hr_delay_flat_in_lambda_during_adaptation():
    delays = [confirmation_delay(50, LoadRegime.HR, NetworkParams(lambda_high=lam)) for lam in (50, 80, 100)]
    assert delays[0] == pytest.approx(delays[1]) == pytest.approx(delays[2])

def test_delay_ordering():
    # at m = 2 both HR (zero) and L2HR (one interarrival) are trivial
    for m in range(3, 300, 7):
        assert confirmation_delay(m, LoadRegime.H2LR, PARAMS) >= confirmation_delay(m, LoadRegime.LR, PARAMS)
        assert confirmation_delay(m, LoadRegime.HR, PARAMS) >= confirmation_delay(m, LoadRegime.L2HR, PARAMS)

def test_delay_weight_consistency_for_linear_regimes():
    for m in (2, 50, 100, 200):
        assert expected_weight_lr(confirmation_delay(m, LoadRegime.LR, PARAMS), 0.5) == m
        assert expected_weight_l2hr(confirmation_delay(m, LoadRegime.L2HR, PARAMS), 50.0) == m

def test_first_passage_is_a_distribution():
    for tip_count, m in ((10, 5), (20, 20), (100, 150)):
        passage = h2lr_first_passage(m, tip_count)
        assert passage.sum() == pytest.approx(1.0, abs=1e-12)
        assert passage[: m - 1].sum() == 0.0

def test_first_passage_matches_unconstrained_chain():
    # first hit of m at step k means W(k-1) = m-1 and the step approves
    tip_count, m = 30, 12
    passage = h2lr_first_passage(m, tip_count)
    for k in range(1, m + tip_count + 1):
        before = h2lr_distribution(k - 1, tip_count)
        j = max(tip_count - (k - 1), 1)
        a = 2.0 / j if j >= 2 else 1.0
        assert passage[k] == pytest.approx(before.probability(m - 1) * a, abs=1e-14)

@pytest.mark.parametrize("tip_count", [10, 20, 50, 100])
def test_h2lr_delay_matches_chain_monte_carlo(tip_count):
    params = NetworkParams(lambda_high=tip_count / 2.0, lambda_low=0.5)
    assert params.chain_tip_count == tip_count
    for m in (5, tip_count // 2, tip_count, tip_count + 50):
        analytic = confirmation_delay(m, LoadRegime.H2LR, params)
        estimate = simulate_h2lr_delay(m, tip_count, 0.5, 20000, derive_stream(5, m, f"chain-delay/{tip_count}"))
        assert estimate.censored == 0
        assert estimate.mean == pytest.approx(analytic, rel=0.02)

@pytest.mark.parametrize("tip_count", [10, 20, 50])
def test_chain_monte_carlo_matches_distribution(tip_count):
    for k in (tip_count // 2, tip_count, 2 * tip_count):
        exact = h2lr_distribution(k, tip_count)
        empirical = simulate_h2lr_chain(k, tip_count, 100_000, derive_stream(9, k, f"chain/{tip_count}"))
        assert empirical.tip_count == exact.tip_count
        assert total_variation(exact.weights, empirical.weights) <= 0.01

def test_expected_tip_count_levels():
    assert expected_tip_count(10.0, LoadRegime.HR, PARAMS) == 100.0
    assert expected_tip_count(10.0, LoadRegime.LR, PARAMS) == 1.0
    assert expected_tip_count(10.0, LoadRegime.H2LR, PARAMS, switch_time=50.0) == 100.0
    assert expected_tip_count(90.0, LoadRegime.H2LR, PARAMS, switch_time=50.0) == pytest.approx(80.0)
    assert expected_tip_count(1000.0, LoadRegime.H2LR, PARAMS, switch_time=50.0) == 1.0
    assert expected_tip_count(60.0, LoadRegime.L2HR, PARAMS, switch_time=50.0) == 100.0
