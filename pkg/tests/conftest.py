"""Shared fixtures. Gain tuning is slow enough to run once per session."""

from __future__ import annotations

import pytest

from spillreg.controllers import tune_pid
from spillreg.spillsim import EnvConfig

TRAIN_SEEDS = tuple(range(9))


@pytest.fixture(scope="session")
def env_cfg() -> EnvConfig:
    return EnvConfig()


@pytest.fixture(scope="session")
def short_cfg() -> EnvConfig:
    # small episode for property tests that sweep many episodes
    return EnvConfig(steps_per_episode=40)


@pytest.fixture(scope="session")
def tuned_gains(env_cfg):
    return tune_pid(env_cfg, list(TRAIN_SEEDS))
