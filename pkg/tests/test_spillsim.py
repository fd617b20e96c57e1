"""Environment behavior: determinism, noise structure, clamping, CSV output."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spillreg import spillsim
from spillreg.errors import ConfigError, EpisodeExhausted, InvalidActionError
from spillreg.spillsim import EnvConfig, SpillEnv, format_trace_csv, run_raw_episode


def test_same_seed_reproduces_raw_trace(env_cfg):
    assert run_raw_episode(env_cfg, 3) == run_raw_episode(env_cfg, 3)


def test_different_seeds_differ(env_cfg):
    assert run_raw_episode(env_cfg, 0) != run_raw_episode(env_cfg, 1)


def test_episode_length(env_cfg):
    assert len(run_raw_episode(env_cfg, 0)) == env_cfg.steps_per_episode


def test_raw_trace_independent_of_actions(env_cfg):
    """Actions shift the corrected sample only; the noise draw is untouched."""
    idle = SpillEnv(env_cfg)
    idle.reset(5)
    driven = SpillEnv(env_cfg)
    driven.reset(5)
    done = False
    k = 0
    while not done:
        idle.step(0.0)
        _, done = driven.step(0.3 * math.sin(k))
        k += 1
    assert idle.raw_trace == driven.raw_trace
    assert idle.corrected_trace != driven.corrected_trace


def test_corrected_equals_raw_minus_action_within_clamp():
    cfg = EnvConfig(steps_per_episode=50)
    env = SpillEnv(cfg)
    env.reset(2)
    done = False
    action = 0.1
    while not done:
        obs, done = env.step(action)
    for raw, corr, act in zip(env.raw_trace, env.corrected_trace, env.actions):
        expected = min(max(raw - act, cfg.clamp_lo), cfg.clamp_hi)
        assert corr == expected


def test_clamp_bounds_hold_under_big_actions():
    cfg = EnvConfig(steps_per_episode=60, clamp_lo=0.0, clamp_hi=2.0, action_bound=10.0)
    env = SpillEnv(cfg)
    env.reset(4)
    for k in range(cfg.steps_per_episode):
        obs, _ = env.step(5.0 if k % 2 else -5.0)
        assert cfg.clamp_lo <= obs <= cfg.clamp_hi


def test_ripple_matches_analytic_form_when_noise_off():
    cfg = EnvConfig(steps_per_episode=100, ou_sigma=0.0)
    env = SpillEnv(cfg)
    env.reset(9)
    phases = env.state.phases
    done = False
    while not done:
        _, done = env.step(0.0)
    for t, raw in enumerate(env.raw_trace):
        expected = cfg.reference
        for amp, freq, phase in zip(cfg.ripple_amps, cfg.ripple_freqs, phases):
            expected += amp * math.sin(2.0 * math.pi * freq * t * cfg.dt + phase)
        assert raw == pytest.approx(expected, abs=1e-12)


def test_ou_stationary_std():
    # var of x_t = rho^2 var + sigma^2 converges to sigma^2/(1-rho^2)
    cfg = EnvConfig(steps_per_episode=100_000, ripple_amps=(), ripple_freqs=(),
                    ou_sigma=0.02, clamp_lo=-10.0, clamp_hi=10.0)
    trace = run_raw_episode(cfg, 0)
    dev = [x - cfg.reference for x in trace]
    mean = sum(dev) / len(dev)
    std = math.sqrt(sum((d - mean) ** 2 for d in dev) / len(dev))
    expected = cfg.ou_sigma / math.sqrt(1.0 - cfg.ou_rho**2)
    assert std == pytest.approx(expected, rel=0.10)


def test_noise_amplitude_change_shares_phase_draws():
    """One normal per step regardless of sigma, so phases line up across configs."""
    quiet = EnvConfig(steps_per_episode=10, ou_sigma=0.0)
    loud = EnvConfig(steps_per_episode=10, ou_sigma=0.4)
    a = spillsim.reset(quiet, 7)
    b = spillsim.reset(loud, 7)
    assert a.phases == b.phases


def test_step_past_end_raises(env_cfg):
    env = SpillEnv(EnvConfig(steps_per_episode=3))
    env.reset(0)
    for _ in range(3):
        env.step(0.0)
    with pytest.raises(EpisodeExhausted):
        env.step(0.0)


def test_step_before_reset_raises(env_cfg):
    with pytest.raises(EpisodeExhausted):
        SpillEnv(env_cfg).step(0.0)


def test_nonfinite_action_rejected(env_cfg):
    env = SpillEnv(env_cfg)
    env.reset(0)
    with pytest.raises(InvalidActionError):
        env.step(float("nan"))
    with pytest.raises(InvalidActionError):
        env.step(float("inf"))


def test_done_flag_only_on_last_step():
    cfg = EnvConfig(steps_per_episode=5)
    env = SpillEnv(cfg)
    env.reset(1)
    flags = [env.step(0.0)[1] for _ in range(5)]
    assert flags == [False, False, False, False, True]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"steps_per_episode": 0},
        {"dt": 0.0},
        {"ripple_amps": (0.1,), "ripple_freqs": (60.0, 180.0)},
        {"ou_rho": 1.0},
        {"ou_rho": -0.1},
        {"ou_sigma": -1.0},
        {"clamp_lo": 1.5},
        {"action_bound": 0.0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EnvConfig(**kwargs)


def test_config_round_trip(env_cfg):
    again = EnvConfig.from_dict(env_cfg.to_dict())
    assert again == env_cfg


def test_config_rejects_unknown_field():
    with pytest.raises(ConfigError):
        EnvConfig.from_dict({"stepss": 10})


def test_trace_csv_format():
    text = format_trace_csv([1.5, 1.25], [1.5, 1.0], [0.0, 0.25])
    assert text == "t,raw,corrected,action\n0,1.5,1.5,0\n1,1.25,1,0.25\n"


def test_trace_csv_rejects_misaligned_columns():
    with pytest.raises(ConfigError):
        format_trace_csv([1.0], [1.0, 2.0], [0.0])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32))
def test_reset_is_pure(seed):
    cfg = EnvConfig(steps_per_episode=8)
    a = spillsim.reset(cfg, seed)
    b = spillsim.reset(cfg, seed)
    assert a.phases == b.phases
    assert a.rng.state == b.rng.state
