"""Metric correctness: SDF anchors, reward recursions vs direct sums, reports."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spillreg import metrics
from spillreg.errors import InputError
from spillreg.metrics import (
    ImprovementReport,
    RewardAccumulator,
    SeedResult,
    ema_direct_oracle,
    ema_direct_series,
    ema_reward,
    improvement,
    neg_sum_series,
    sdf,
)

finite_traces = st.lists(
    st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
    min_size=2,
    max_size=200,
)


def test_sdf_constant_trace_is_one():
    assert sdf([1.0] * 10).sdf == 1.0
    assert sdf([0.3, 0.3, 0.3]).sdf == 1.0


def test_sdf_known_variances():
    # population variance 2/3 gives 1/(1 + 2/3) = 0.6
    a = math.sqrt(2.0 / 3.0)
    assert sdf([1.0 + a, 1.0 - a]).sdf == pytest.approx(0.6, abs=1e-12)
    # [1,1,1,3] has variance 0.75
    assert sdf([1.0, 1.0, 1.0, 3.0]).sdf == pytest.approx(1.0 / 1.75, abs=1e-12)


def test_sdf_report_fields():
    rep = sdf([1.0, 1.0, 1.0, 3.0])
    assert rep.n_samples == 4
    assert rep.spill_std == pytest.approx(math.sqrt(0.75))


@settings(max_examples=60, deadline=None)
@given(trace=finite_traces)
def test_sdf_in_unit_interval(trace):
    value = sdf(trace).sdf
    assert 0.0 < value <= 1.0


@settings(max_examples=60, deadline=None)
@given(trace=finite_traces, shift=st.floats(min_value=-10, max_value=10))
def test_sdf_shift_invariant(trace, shift):
    # depends on the spread only, not on the operating point
    base = sdf(trace).sdf
    moved = sdf([x + shift for x in trace]).sdf
    assert moved == pytest.approx(base, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("bad", [[], [1.0], [1.0, float("nan")], [1.0, float("inf")]])
def test_sdf_rejects_bad_traces(bad):
    with pytest.raises(InputError):
        sdf(bad)


def test_ema_reward_hand_values():
    # alpha 0.5, errors [0.2, 0.1]:
    #   EMA_0 = 0.5*0.2 = 0.1, EMA_1 = 0.5*0.1 + 0.5*0.1 = 0.1
    assert ema_reward([0.2, 0.1], 0.5) == pytest.approx([-0.1, -0.1], abs=1e-15)


def test_ema_reward_alpha_edges():
    errors = [0.4, 0.3, 0.2]
    assert ema_reward(errors, 1.0) == pytest.approx([-e for e in errors])
    assert ema_reward(errors, 0.0) == pytest.approx([0.0, 0.0, 0.0], abs=0.0)


@pytest.mark.parametrize("alpha", [-0.1, 1.5, float("nan")])
def test_ema_reward_rejects_bad_alpha(alpha):
    with pytest.raises(InputError):
        ema_reward([0.1], alpha)


@settings(max_examples=80, deadline=None)
@given(
    errors=st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=60),
    alpha=st.floats(min_value=0.0, max_value=1.0),
)
def test_ema_recursion_matches_direct_sum(errors, alpha):
    # the direct helpers return the positive EMA; rewards are its negation
    recursive = ema_reward(errors, alpha)
    direct = ema_direct_series(errors, alpha)
    assert np.max(np.abs(np.asarray(recursive) + direct)) < 1e-12


def test_ema_direct_oracle_single_index():
    errors = [0.5, 0.25, 1.0]
    alpha = 0.3
    for t in range(len(errors)):
        expected = sum(
            alpha * (1 - alpha) ** (t - tau) * errors[tau] for tau in range(t + 1)
        )
        assert ema_direct_oracle(errors, alpha, t) == pytest.approx(expected, abs=1e-15)
    with pytest.raises(InputError):
        ema_direct_oracle(errors, alpha, len(errors))


def test_neg_sum_hand_values():
    # running sum of |e| scaled by 1/steps_per_episode
    assert neg_sum_series([0.2, 0.1], 2) == pytest.approx([-0.1, -0.15])
    with pytest.raises(InputError):
        neg_sum_series([0.1], 0)


def test_reward_accumulator_streams_match_batch():
    errors = [0.3, 0.05, 0.7, 0.0, 0.2]
    ema_acc = RewardAccumulator("neg_ema", 0.4, len(errors))
    sum_acc = RewardAccumulator("neg_sum", 0.4, len(errors))
    streamed_ema = [ema_acc.push(e) for e in errors]
    streamed_sum = [sum_acc.push(e) for e in errors]
    assert streamed_ema == pytest.approx(ema_reward(errors, 0.4), abs=1e-15)
    assert streamed_sum == pytest.approx(neg_sum_series(errors, len(errors)), abs=1e-15)


def test_reward_accumulator_rejects_unknown_kind():
    with pytest.raises(InputError):
        RewardAccumulator("bogus", 0.5, 10)


def test_improvement_percent():
    assert improvement(0.66, 0.6) == pytest.approx(10.0)
    assert improvement(0.54, 0.6) == pytest.approx(-10.0)
    with pytest.raises(InputError):
        improvement(0.5, 0.0)


def test_improvement_report_dict_shape():
    report = ImprovementReport(
        seeds=[
            SeedResult(seed=0, sdf_noise=0.5, sdf_pid=0.75, sdf_rl=0.8),
            SeedResult(seed=1, sdf_noise=0.4, sdf_pid=0.8, sdf_rl=0.7),
        ]
    )
    data = report.to_dict()
    assert [row["seed"] for row in data["per_seed"]] == [0, 1]
    row = data["per_seed"][0]
    assert row["vs_pid_pct"] == pytest.approx(improvement(0.8, 0.75))
    assert row["vs_noise_pct"] == pytest.approx(improvement(0.8, 0.5))
    agg = data["aggregate"]
    assert agg["mean_sdf_rl"] == pytest.approx(0.75)
    # the primary aggregate is the mean of per-seed ratios
    per_seed_vs_pid = [improvement(0.8, 0.75), improvement(0.7, 0.8)]
    assert agg["vs_pid_pct"] == pytest.approx(sum(per_seed_vs_pid) / 2)
    assert agg["vs_pid_pct"] == agg["vs_pid_pct_mean_of_ratios"]
    # ratio of means differs from mean of ratios on heterogeneous seeds
    assert agg["vs_pid_pct_of_means"] == pytest.approx(
        improvement(0.75, (0.75 + 0.8) / 2)
    )


def test_reward_kinds_registry():
    assert set(metrics.REWARD_KINDS) == {"neg_ema", "neg_sum"}
