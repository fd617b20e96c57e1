"""Spill quality metrics and reward shaping.

The central figure of merit is the spill duty factor (SDF) of one episode:

    sdf = 1 / (1 + var(x))

where var(x) is the population variance of the corrected spill trace. A
perfectly flat spill at the reference intensity scores 1; the operational
goal used throughout the package is 0.6 or better.

Rewards seen by the learner are negative moving aggregates of the absolute
tracking error e_t = |x_t - reference|:

    neg_ema   r_t = -EMA_t,  EMA_t = alpha * e_t + (1 - alpha) * EMA_{t-1},
              seeded with EMA_{-1} = 0
    neg_sum   r_t = -(1 / steps_per_episode) * sum_{tau <= t} e_tau

The recursive EMA has the closed form sum_{tau<=t} alpha*(1-alpha)^(t-tau)*e_tau,
which ema_direct_oracle() evaluates by direct summation as an independent
cross-check of the recursion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError

REWARD_KINDS = ("neg_ema", "neg_sum")


@dataclass(frozen=True)
class SdfReport:
    """SDF of one trace plus the ingredients it was computed from."""

    sdf: float
    spill_std: float
    n_samples: int


def sdf(trace: Sequence[float]) -> SdfReport:
    """Spill duty factor of a corrected spill trace.

    Uses the population standard deviation (ddof=0). Requires at least two
    samples; a shorter trace has no meaningful spread.
    """
    n = len(trace)
    if n < 2:
        raise InputError(f"sdf needs a trace of length >= 2, got {n}")
    arr = np.asarray(trace, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError("sdf trace contains non-finite samples")
    var = float(np.var(arr))
    return SdfReport(sdf=1.0 / (1.0 + var), spill_std=math.sqrt(var), n_samples=n)


def _check_alpha(alpha: float) -> None:
    if not (isinstance(alpha, (int, float)) and math.isfinite(alpha)):
        raise InputError("alpha must be a finite number")
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")


def ema_reward(errors: Sequence[float], alpha: float) -> list[float]:
    """Reward series r_t = -EMA_t over an absolute-error series.

    The recursion starts from EMA_{-1} = 0, so r_0 = -alpha * e_0.
    """
    _check_alpha(alpha)
    rewards = []
    ema = 0.0
    for e in errors:
        ema = alpha * e + (1.0 - alpha) * ema
        rewards.append(-ema)
    return rewards


def ema_direct_oracle(errors: Sequence[float], alpha: float, t: int) -> float:
    """EMA_t evaluated by direct summation: sum_{tau<=t} alpha*(1-alpha)^(t-tau)*e_tau.

    Independent of the recursion in ema_reward(); intended as a test oracle.
    Returns the positive EMA value (the reward at t is its negation).
    """
    _check_alpha(alpha)
    if not 0 <= t < len(errors):
        raise InputError(f"t={t} outside the error series of length {len(errors)}")
    e = np.asarray(errors[: t + 1], dtype=np.float64)
    # powers (1-alpha)^(t-tau) for tau = 0..t, with 0^0 = 1 so alpha=1 works
    decay = np.power(1.0 - alpha, np.arange(t, -1, -1, dtype=np.float64))
    return float(alpha * np.dot(decay, e))


def ema_direct_series(errors: Sequence[float], alpha: float) -> np.ndarray:
    """All EMA_t values by direct summation, vectorized over t.

    Equivalent to [ema_direct_oracle(errors, alpha, t) for t in range(T)]
    but built from one lower-triangular weight matrix so long batches stay
    inside the acceptance-suite time budget.
    """
    _check_alpha(alpha)
    e = np.asarray(errors, dtype=np.float64)
    t_len = e.shape[0]
    if t_len == 0:
        return np.zeros(0)
    lag = np.arange(t_len)[:, None] - np.arange(t_len)[None, :]
    weights = np.where(lag >= 0, np.power(1.0 - alpha, np.maximum(lag, 0)), 0.0)
    return alpha * (weights @ e)


class RewardAccumulator:
    """Incremental per-step reward tracker used while an episode unfolds.

    push() consumes one absolute error and returns the reward for that step.
    The offline series helpers above must reproduce the pushed sequence
    exactly; tests rely on that equivalence.
    """

    def __init__(self, kind: str, alpha: float, steps_per_episode: int):
        if kind not in REWARD_KINDS:
            raise InputError(f"unknown reward kind {kind!r}, expected one of {REWARD_KINDS}")
        _check_alpha(alpha)
        if steps_per_episode < 1:
            raise InputError("steps_per_episode must be >= 1")
        self.kind = kind
        self.alpha = alpha
        self.scale = 1.0 / steps_per_episode
        self._ema = 0.0
        self._running_sum = 0.0

    def push(self, error: float) -> float:
        if not math.isfinite(error) or error < 0.0:
            raise InputError(f"absolute error must be finite and >= 0, got {error}")
        if self.kind == "neg_ema":
            self._ema = self.alpha * error + (1.0 - self.alpha) * self._ema
            return -self._ema
        self._running_sum += error
        return -self.scale * self._running_sum


def neg_sum_series(errors: Sequence[float], steps_per_episode: int) -> list[float]:
    """Offline neg_sum reward series matching RewardAccumulator('neg_sum', ...)."""
    if steps_per_episode < 1:
        raise InputError("steps_per_episode must be >= 1")
    scale = 1.0 / steps_per_episode
    out = []
    total = 0.0
    for e in errors:
        total += e
        out.append(-scale * total)
    return out


def improvement(sdf_new: float, sdf_ref: float) -> float:
    """Relative improvement of sdf_new over sdf_ref, in percent."""
    if sdf_ref <= 0.0:
        raise InputError("reference SDF must be positive")
    return 100.0 * (sdf_new - sdf_ref) / sdf_ref


@dataclass
class SeedResult:
    """Per-seed comparison of unregulated, PID, and learned control."""

    seed: int
    sdf_noise: float
    sdf_pid: float
    sdf_rl: float

    @property
    def vs_pid_pct(self) -> float:
        return improvement(self.sdf_rl, self.sdf_pid)

    @property
    def vs_noise_pct(self) -> float:
        return improvement(self.sdf_rl, self.sdf_noise)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "sdf_noise": self.sdf_noise,
            "sdf_pid": self.sdf_pid,
            "sdf_rl": self.sdf_rl,
            "vs_pid_pct": self.vs_pid_pct,
            "vs_noise_pct": self.vs_noise_pct,
        }


@dataclass
class ImprovementReport:
    """Per-seed results plus aggregates.

    Two aggregate styles are reported side by side: the mean of the per-seed
    improvement ratios (primary) and the improvement of the mean SDFs. They
    answer slightly different questions, so both are kept.
    """

    seeds: list[SeedResult] = field(default_factory=list)

    def add(self, result: SeedResult) -> None:
        self.seeds.append(result)

    @property
    def mean_sdf_noise(self) -> float:
        return float(np.mean([s.sdf_noise for s in self.seeds]))

    @property
    def mean_sdf_pid(self) -> float:
        return float(np.mean([s.sdf_pid for s in self.seeds]))

    @property
    def mean_sdf_rl(self) -> float:
        return float(np.mean([s.sdf_rl for s in self.seeds]))

    @property
    def vs_pid_pct_mean_of_ratios(self) -> float:
        return float(np.mean([s.vs_pid_pct for s in self.seeds]))

    @property
    def vs_noise_pct_mean_of_ratios(self) -> float:
        return float(np.mean([s.vs_noise_pct for s in self.seeds]))

    @property
    def vs_pid_pct_of_means(self) -> float:
        return improvement(self.mean_sdf_rl, self.mean_sdf_pid)

    @property
    def vs_noise_pct_of_means(self) -> float:
        return improvement(self.mean_sdf_rl, self.mean_sdf_noise)

    def to_dict(self) -> dict:
        if not self.seeds:
            raise InputError("report has no per-seed results")
        return {
            "per_seed": [s.to_dict() for s in self.seeds],
            "aggregate": {
                "mean_sdf_noise": self.mean_sdf_noise,
                "mean_sdf_pid": self.mean_sdf_pid,
                "mean_sdf_rl": self.mean_sdf_rl,
                # primary aggregates (mean of per-seed ratios)
                "vs_pid_pct": self.vs_pid_pct_mean_of_ratios,
                "vs_noise_pct": self.vs_noise_pct_mean_of_ratios,
                "vs_pid_pct_mean_of_ratios": self.vs_pid_pct_mean_of_ratios,
                "vs_noise_pct_mean_of_ratios": self.vs_noise_pct_mean_of_ratios,
                "vs_pid_pct_of_means": self.vs_pid_pct_of_means,
                "vs_noise_pct_of_means": self.vs_noise_pct_of_means,
            },
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)
