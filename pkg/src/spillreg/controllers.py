"""Discrete PID control, gain tuning, and the trainable policy heads.

The classical controller follows the discrete-time PID law

    u_t = kp * P_t + ki * I_t + kd * D_t

with P_t = x_t - reference, I_t the literal running sum of errors including
the current one, and D_t the first difference of the error divided by dt
(zero at t = 0, where no previous error exists).

The trainable "neuralized PID" policy is a linear map over a state vector
whose default features are exactly (P, I, D, Act), Act being the previously
applied action. With pid_weights set to tuned PID gains and the action head
and bias at zero, policy_mean reproduces pid_update to machine precision:
the policy strictly generalizes the controller it is initialized from. Two
ablation state variants exist (PID3 drops Act; CDOver swaps in corrected
difference and an over-reference counter), plus an NN policy variant that
replaces the linear map with a small tanh network over the same features.

Exploration is a Gaussian over the mean action with a learnable log_std,
clamped to [-5, 2]. Sampling returns the pre-clamp action and its log
probability; actuation clamps to the environment's action bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import gradnet, metrics
from .errors import ConfigError, DivergenceError, InputError, ShapeError
from .rng import Xoshiro256StarStar
from .spillsim import EnvConfig, SpillEnv

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

VARIANT_PID_ACT = "pid_act"  # [P, I, D, Act]
VARIANT_PID3 = "pid3"  # [P, I, D]
VARIANT_CD_OVER = "cd_over"  # [CD, Over1, P, Act]

STATE_VARIANTS = (VARIANT_PID_ACT, VARIANT_PID3, VARIANT_CD_OVER)
STATE_DIMS = {VARIANT_PID_ACT: 4, VARIANT_PID3: 3, VARIANT_CD_OVER: 4}
STATE_LABELS = {
    VARIANT_PID_ACT: "P,I,D,Act",
    VARIANT_PID3: "P,I,D",
    VARIANT_CD_OVER: "CD,Over-1,P,Act",
}

POLICY_KINDS = ("pid", "nn")

# Per-feature scales used only inside trainable representations: learners see
# features/scale and weights*scale, which balances Adam's uniform step size
# across features whose natural magnitudes span four orders (D is an error
# rate over dt = 1e-4, so its std sits near 4e3 while P stays below 1).
# Powers of two make w*scale/scale bit-exact, so the semantic parameters and
# the exact PID embedding are untouched by the reparameterization.
FEATURE_SCALES = {
    VARIANT_PID_ACT: (1.0, 8.0, 4096.0, 1.0),
    VARIANT_PID3: (1.0, 8.0, 4096.0),
    VARIANT_CD_OVER: (1.0, 1.0, 1.0, 1.0),
}


def feature_scales(variant: str) -> np.ndarray:
    if variant not in FEATURE_SCALES:
        raise ShapeError(f"unknown state variant {variant!r}")
    return np.asarray(FEATURE_SCALES[variant], dtype=np.float64)


# --- classical PID ----------------------------------------------------------

@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        for name in ("kp", "ki", "kd"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    def to_dict(self) -> dict:
        return {"format_version": 1, "kp": self.kp, "ki": self.ki, "kd": self.kd, "dt": self.dt}

    @classmethod
    def from_dict(cls, data: dict) -> "PidGains":
        if data.get("format_version") != 1:
            raise ConfigError(f"unsupported gains format_version {data.get('format_version')!r}")
        return cls(kp=float(data["kp"]), ki=float(data["ki"]), kd=float(data["kd"]), dt=float(data["dt"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class ErrorState:
    """PID features at one step. error_diff_rate is 0 at t=0 by convention."""

    current_error: float
    error_sum: float
    error_diff_rate: float
    prev_error: float


class ErrorTracker:
    """Accumulates ErrorState over a trace, one push per sample."""

    def __init__(self, reference: float, dt: float):
        self.reference = reference
        self.dt = dt
        self._n = 0
        self._prev_error = 0.0
        self._error_sum = 0.0

    def push(self, sample: float) -> ErrorState:
        e = sample - self.reference
        diff_rate = 0.0 if self._n == 0 else (e - self._prev_error) / self.dt
        self._error_sum += e
        state = ErrorState(
            current_error=e,
            error_sum=self._error_sum,
            error_diff_rate=diff_rate,
            prev_error=self._prev_error,
        )
        self._prev_error = e
        self._n += 1
        return state


def pid_update(gains: PidGains, err: ErrorState) -> float:
    """The PID control value kp*P + ki*I + kd*D."""
    for name, v in (
        ("current_error", err.current_error),
        ("error_sum", err.error_sum),
        ("error_diff_rate", err.error_diff_rate),
    ):
        if not math.isfinite(v):
            raise InputError(f"ErrorState.{name} is not finite: {v}")
    return gains.kp * err.current_error + gains.ki * err.error_sum + gains.kd * err.error_diff_rate


def clamp_action(action: float, bound: float) -> float:
    if action > bound:
        return bound
    if action < -bound:
        return -bound
    return action


def pid_episode_records(
    config: EnvConfig, seed: int, gains: PidGains
) -> tuple[list[float], list[float], list[float]]:
    """Closed-loop PID episode; returns (raw, corrected, applied_actions).

    The control computed after observing x_t is applied to x_{t+1}; the
    first step runs with action 0.
    """
    if gains.dt != config.dt:
        raise ConfigError(f"gains.dt={gains.dt} does not match config.dt={config.dt}")
    env = SpillEnv(config)
    env.reset(seed)
    tracker = ErrorTracker(config.reference, config.dt)
    pending = 0.0
    done = False
    while not done:
        obs, done = env.step(pending)
        err = tracker.push(obs)
        pending = clamp_action(pid_update(gains, err), config.action_bound)
    return list(env.raw_trace), list(env.corrected_trace), list(env.actions)


def run_pid_episode(config: EnvConfig, seed: int, gains: PidGains) -> list[float]:
    """Corrected trace of one closed-loop PID episode."""
    _, corrected, _ = pid_episode_records(config, seed, gains)
    return corrected


# --- gain tuning ------------------------------------------------------------

@dataclass(frozen=True)
class GainGrid:
    kp: tuple[float, ...]
    ki: tuple[float, ...]
    kd: tuple[float, ...]

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            axis = tuple(float(v) for v in getattr(self, name))
            if not axis:
                raise ConfigError(f"gain grid axis {name} is empty")
            object.__setattr__(self, name, axis)


DEFAULT_GAIN_GRID = GainGrid(
    kp=(0.0, 0.25, 0.5, 0.75, 1.0),
    ki=(0.0, 0.1, 0.3, 0.6, 0.9),
    kd=(0.0, 1e-5, 2e-5),
)


def _axis_step(axis: tuple[float, ...]) -> float:
    if len(axis) < 2:
        return 0.0
    return (max(axis) - min(axis)) / (len(axis) - 1)


def tune_pid(config: EnvConfig, seeds: list[int], grid: GainGrid = DEFAULT_GAIN_GRID) -> PidGains:
    """Grid search maximizing mean SDF over seeds, plus coordinate refinement.

    After the exhaustive grid pass the best point is polished by one
    coordinate-descent pass: 3 rounds over the axes, probing +-step with the
    step halved each round (initial step = half the axis spacing). Ties are
    broken toward the smallest (|kp|, |ki|, |kd|) lexicographically.
    """
    if not seeds:
        raise ConfigError("tune_pid needs a non-empty seed list")
    cache: dict[tuple[float, float, float], float] = {}

    def mean_sdf(point: tuple[float, float, float]) -> float:
        if point not in cache:
            gains = PidGains(point[0], point[1], point[2], dt=config.dt)
            total = 0.0
            for s in seeds:
                total += metrics.sdf(run_pid_episode(config, s, gains)).sdf
            cache[point] = total / len(seeds)
        return cache[point]

    def magnitude(point: tuple[float, float, float]) -> tuple[float, float, float]:
        return (abs(point[0]), abs(point[1]), abs(point[2]))

    best: tuple[float, float, float] | None = None
    best_score = -math.inf
    for kp in grid.kp:
        for ki in grid.ki:
            for kd in grid.kd:
                point = (kp, ki, kd)
                score = mean_sdf(point)
                if best is None or score > best_score or (
                    score == best_score and magnitude(point) < magnitude(best)
                ):
                    best, best_score = point, score

    steps = [_axis_step(grid.kp), _axis_step(grid.ki), _axis_step(grid.kd)]
    for rnd in range(1, 4):
        for axis in range(3):
            h = steps[axis] / (2.0 ** rnd)
            if h == 0.0:
                continue
            for delta in (-h, h):
                cand = list(best)
                cand[axis] += delta
                point = (cand[0], cand[1], cand[2])
                score = mean_sdf(point)
                if score > best_score or (score == best_score and magnitude(point) < magnitude(best)):
                    best, best_score = point, score
    return PidGains(best[0], best[1], best[2], dt=config.dt)


# --- state vectors ----------------------------------------------------------

@dataclass(frozen=True)
class StateVector:
    variant: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.variant not in STATE_DIMS:
            raise ShapeError(f"unknown state variant {self.variant!r}")
        if len(self.values) != STATE_DIMS[self.variant]:
            raise ShapeError(
                f"variant {self.variant} expects {STATE_DIMS[self.variant]} features, got {len(self.values)}"
            )
        if any(not math.isfinite(v) for v in self.values):
            raise InputError(f"state vector has non-finite entries: {self.values}")


class StateTracker:
    """Builds the per-step StateVector for the active variant during an episode.

    push() is called once per environment step with the new raw sample, the
    corrected sample, and the action that was applied to produce it (that
    action is the Act feature, i.e. a_{t-1} relative to the new decision).
    """

    def __init__(self, config: EnvConfig, variant: str):
        if variant not in STATE_DIMS:
            raise ShapeError(f"unknown state variant {variant!r}")
        self.variant = variant
        self.errors = ErrorTracker(config.reference, config.dt)
        self._reference = config.reference
        self._over_scale = 1.0 / config.steps_per_episode
        self._over_count = 0
        self._prev_corrected: float | None = None
        self.last_error_state: ErrorState | None = None

    def push(self, raw: float, corrected: float, applied_action: float) -> StateVector:
        err = self.errors.push(corrected)
        self.last_error_state = err
        if self.variant == VARIANT_PID_ACT:
            values = (err.current_error, err.error_sum, err.error_diff_rate, applied_action)
        elif self.variant == VARIANT_PID3:
            values = (err.current_error, err.error_sum, err.error_diff_rate)
        else:  # CDOver
            cd = 0.0 if self._prev_corrected is None else corrected - self._prev_corrected
            if raw >= self._reference:
                self._over_count += 1
            values = (cd, self._over_count * self._over_scale, err.current_error, applied_action)
        self._prev_corrected = corrected
        return StateVector(self.variant, values)


# --- trainable policies -----------------------------------------------------

@dataclass(frozen=True)
class PolicyParams:
    """Parameters of the linear (neuralized-PID) policy head."""

    pid_weights: tuple[float, float, float]
    action_weight: float
    bias: float
    log_std: float

    def __post_init__(self):
        object.__setattr__(self, "pid_weights", tuple(float(w) for w in self.pid_weights))
        if len(self.pid_weights) != 3:
            raise ShapeError(f"pid_weights must have 3 entries, got {len(self.pid_weights)}")
        values = (*self.pid_weights, self.action_weight, self.bias, self.log_std)
        if any(not math.isfinite(v) for v in values):
            raise InputError("policy parameters must be finite")

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "linear",
            "pid_weights": list(self.pid_weights),
            "action_weight": self.action_weight,
            "bias": self.bias,
            "log_std": self.log_std,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyParams":
        if data.get("format_version") != 1 or data.get("kind") != "linear":
            raise ConfigError(f"unsupported policy params header: {data.get('format_version')!r}/{data.get('kind')!r}")
        return cls(
            pid_weights=tuple(float(w) for w in data["pid_weights"]),
            action_weight=float(data["action_weight"]),
            bias=float(data["bias"]),
            log_std=float(data["log_std"]),
        )


def clamp_log_std(log_std: float) -> float:
    return min(max(log_std, LOG_STD_MIN), LOG_STD_MAX)


def gaussian_log_prob(x: float, mean: float, log_std: float) -> float:
    std = math.exp(log_std)
    z = (x - mean) / std
    return -0.5 * z * z - log_std - _HALF_LOG_TWO_PI


def policy_mean(params: PolicyParams, state: StateVector) -> float:
    """Deterministic mean action of the linear policy for this state.

    For PIDAct the expression is written in the same order as pid_update so
    the PID embedding (action_weight = bias = 0) is exact, not just close.
    """
    w0, w1, w2 = params.pid_weights
    v = state.values
    if state.variant == VARIANT_PID_ACT:
        return w0 * v[0] + w1 * v[1] + w2 * v[2] + params.action_weight * v[3] + params.bias
    if state.variant == VARIANT_PID3:
        return w0 * v[0] + w1 * v[1] + w2 * v[2] + params.bias
    # CDOver: 4-weight linear map over (CD, Over1, P, Act)
    return w0 * v[0] + w1 * v[1] + w2 * v[2] + params.action_weight * v[3] + params.bias


def policy_sample(
    params: PolicyParams, state: StateVector, rng: Xoshiro256StarStar
) -> tuple[float, float]:
    """Draw action ~ Normal(mean, exp(log_std)^2); returns (action, log_prob).

    The returned action is the raw sample; callers clamp it to the actuation
    bound themselves, and the log probability refers to the pre-clamp value.
    """
    mean = policy_mean(params, state)
    log_std = clamp_log_std(params.log_std)
    action = mean + math.exp(log_std) * rng.normal()
    return action, gaussian_log_prob(action, mean, log_std)


def initial_policy_params(gains: PidGains, variant: str) -> PolicyParams:
    """Start the policy at the tuned baseline it must beat.

    PIDAct/PID3 embed the tuned gains directly. CDOver's features are not
    (P, I, D), so only the proportional gain carries over (onto its P
    feature); the remaining weights start at zero.
    """
    if variant in (VARIANT_PID_ACT, VARIANT_PID3):
        weights = (gains.kp, gains.ki, gains.kd)
    elif variant == VARIANT_CD_OVER:
        weights = (0.0, 0.0, gains.kp)
    else:
        raise ShapeError(f"unknown state variant {variant!r}")
    return PolicyParams(pid_weights=weights, action_weight=0.0, bias=0.0, log_std=-1.0)


class LinearActor:
    """Trainable wrapper around PolicyParams.

    Acting goes through policy_mean/policy_sample on plain floats (exactness
    matters there). Training views the same values as numpy arrays: a weight
    vector over the state features plus a bias, with log_std kept separately
    so the PPO update can treat it uniformly across actor kinds.
    """

    kind = "pid"

    def __init__(self, params: PolicyParams, variant: str):
        if variant not in STATE_DIMS:
            raise ShapeError(f"unknown state variant {variant!r}")
        self.variant = variant
        self.state_dim = STATE_DIMS[variant]
        if self.state_dim == 4:
            w = [*params.pid_weights, params.action_weight]
        else:
            w = list(params.pid_weights)
        self._scales = feature_scales(variant)
        # trainable coordinates are the scaled weights (see FEATURE_SCALES)
        self._w = np.asarray(w, dtype=np.float64) * self._scales
        self._bias = np.asarray([params.bias], dtype=np.float64)
        self.log_std_arr = np.asarray([clamp_log_std(params.log_std)], dtype=np.float64)

    @property
    def params(self) -> PolicyParams:
        w = self._w / self._scales
        action_weight = float(w[3]) if self.state_dim == 4 else 0.0
        return PolicyParams(
            pid_weights=(float(w[0]), float(w[1]), float(w[2])),
            action_weight=action_weight,
            bias=float(self._bias[0]),
            log_std=float(self.log_std_arr[0]),
        )

    def mean(self, state: StateVector) -> float:
        return policy_mean(self.params, state)

    def sample(self, state: StateVector, rng: Xoshiro256StarStar) -> tuple[float, float]:
        return policy_sample(self.params, state, rng)

    # training interface
    def mean_params(self) -> list[np.ndarray]:
        return [self._w, self._bias]

    def mean_batch(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        scaled = states / self._scales
        return scaled @ self._w + self._bias[0], scaled

    def mean_grads(self, tape: np.ndarray, dmu: np.ndarray) -> list[np.ndarray]:
        return [tape.T @ dmu, np.asarray([dmu.sum()])]

    def finalize_update(self) -> None:
        self.log_std_arr[0] = clamp_log_std(float(self.log_std_arr[0]))
        if not (np.all(np.isfinite(self._w)) and np.isfinite(self._bias[0])):
            raise DivergenceError("linear actor parameters became non-finite")

    def to_dict(self) -> dict:
        d = self.params.to_dict()
        d["variant"] = self.variant
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "LinearActor":
        return cls(PolicyParams.from_dict(data), data["variant"])


class NnActor:
    """NN-policy ablation: a 64x64 tanh network emits the mean action."""

    kind = "nn"
    HIDDEN = (64, 64)

    def __init__(
        self,
        net: gradnet.DenseNet,
        variant: str,
        log_std: float = -1.0,
        scales: np.ndarray | None = None,
    ):
        if variant not in STATE_DIMS:
            raise ShapeError(f"unknown state variant {variant!r}")
        if net.in_dim != STATE_DIMS[variant] or net.out_dim != 1:
            raise ShapeError(
                f"actor net dims {net.in_dim}->{net.out_dim} do not fit variant {variant}"
            )
        self.variant = variant
        self.state_dim = STATE_DIMS[variant]
        self.net = net
        # the net is defined over features/scale; scales are part of the
        # serialized function, not just a training detail
        self._scales = feature_scales(variant) if scales is None else np.asarray(scales, dtype=np.float64)
        self.log_std_arr = np.asarray([clamp_log_std(log_std)], dtype=np.float64)

    @classmethod
    def fresh(cls, variant: str, rng: Xoshiro256StarStar, log_std: float = -1.0) -> "NnActor":
        dims = [STATE_DIMS[variant], *cls.HIDDEN, 1]
        net = gradnet.init_dense(dims, ["tanh", "tanh", "identity"], rng)
        return cls(net, variant, log_std)

    def mean(self, state: StateVector) -> float:
        scaled = np.asarray(state.values, dtype=np.float64) / self._scales
        out, _ = gradnet.forward(self.net, scaled)
        return float(out[0])

    def sample(self, state: StateVector, rng: Xoshiro256StarStar) -> tuple[float, float]:
        mean = self.mean(state)
        log_std = float(self.log_std_arr[0])
        action = mean + math.exp(log_std) * rng.normal()
        return action, gaussian_log_prob(action, mean, log_std)

    # training interface
    def mean_params(self) -> list[np.ndarray]:
        return self.net.parameters()

    def mean_batch(self, states: np.ndarray) -> tuple[np.ndarray, gradnet.Tape]:
        out, tape = gradnet.forward(self.net, states / self._scales)
        return out[:, 0], tape

    def mean_grads(self, tape: gradnet.Tape, dmu: np.ndarray) -> list[np.ndarray]:
        return gradnet.backward(self.net, tape, dmu[:, None]).params

    def finalize_update(self) -> None:
        self.log_std_arr[0] = clamp_log_std(float(self.log_std_arr[0]))
        self.net.bump_version()
        for p in self.net.parameters():
            if not np.all(np.isfinite(p)):
                raise DivergenceError("NN actor parameters became non-finite")

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": "nn",
            "variant": self.variant,
            "log_std": float(self.log_std_arr[0]),
            "feature_scales": [float(s) for s in self._scales],
            "net": gradnet.net_to_dict(self.net),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NnActor":
        if data.get("format_version") != 1 or data.get("kind") != "nn":
            raise ConfigError(f"unsupported policy params header: {data.get('format_version')!r}/{data.get('kind')!r}")
        scales = data.get("feature_scales")
        return cls(
            gradnet.net_from_dict(data["net"]),
            data["variant"],
            float(data["log_std"]),
            scales=None if scales is None else np.asarray(scales, dtype=np.float64),
        )


def actor_from_dict(data: dict):
    """Dispatch on the serialized kind tag."""
    kind = data.get("kind")
    if kind == "linear":
        return LinearActor.from_dict(data)
    if kind == "nn":
        return NnActor.from_dict(data)
    raise ConfigError(f"unknown actor kind {kind!r}")


def make_actor(
    policy_variant: str,
    state_variant: str,
    gains: PidGains,
    rng: Xoshiro256StarStar,
):
    """Build the actor for a (policy, state) variant pair at its documented init."""
    if policy_variant == "pid":
        return LinearActor(initial_policy_params(gains, state_variant), state_variant)
    if policy_variant == "nn":
        return NnActor.fresh(state_variant, rng)
    raise ConfigError(f"unknown policy variant {policy_variant!r}, expected one of {POLICY_KINDS}")
