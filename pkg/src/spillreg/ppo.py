"""PPO training loop for the spill-regulation policies.

One training iteration is one full episode (430 steps by default): collect a
rollout with the stochastic policy, compute GAE advantages against the critic,
then run several epochs of clipped-surrogate minibatch updates. Nets and
gradients come from gradnet; no autograd framework is involved, so the
gradient of the Gaussian log-probability and of the clipped ratio objective
are written out explicitly in _minibatch_step.

Determinism: every random draw flows from the master seed through named
streams (init / sampling / shuffling), and each training episode gets its own
env seed derived from the rotation slot's base seed plus the episode index.
Evaluation-grade episodes (baselines, reports) use the raw seeds directly so
they are comparable across runs and tools. Fixed master seed means
bit-identical parameters, curves, and checkpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import gradnet, metrics
from .controllers import (
    STATE_DIMS,
    LinearActor,
    NnActor,
    PidGains,
    StateTracker,
    StateVector,
    actor_from_dict,
    clamp_action,
    feature_scales,
    gaussian_log_prob,
    make_actor,
    run_pid_episode,
    tune_pid,
)
from .errors import CheckpointError, ConfigError, DivergenceError, SpillRegError, UsageError
from .metrics import ImprovementReport, SeedResult
from .rng import Xoshiro256StarStar, derive_seed
from .spillsim import EnvConfig, SpillEnv, run_raw_episode

# named sub-streams of the master seed
STREAM_INIT = 1
STREAM_SAMPLE = 2
STREAM_SHUFFLE = 3

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs_per_iter: int = 10
    minibatch: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    lr: float = 1e-4
    iterations: int = 600
    alpha: float = 0.5  # EMA alpha used when no explicit RewardConfig is given
    seed_rotation_period: int = 1000
    seeds: tuple[int, ...] = tuple(range(9))
    optimizer: str = "adam"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not self.clip_eps > 0:
            raise ConfigError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.epochs_per_iter < 1:
            raise ConfigError(f"epochs_per_iter must be >= 1, got {self.epochs_per_iter}")
        if self.minibatch < 1:
            raise ConfigError(f"minibatch must be >= 1, got {self.minibatch}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.seed_rotation_period < 1:
            raise ConfigError(f"seed_rotation_period must be >= 1, got {self.seed_rotation_period}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not 0.0 <= self.value_coef:
            raise ConfigError(f"value_coef must be >= 0, got {self.value_coef}")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "gae_lambda": self.gae_lambda,
            "clip_eps": self.clip_eps,
            "epochs_per_iter": self.epochs_per_iter,
            "minibatch": self.minibatch,
            "value_coef": self.value_coef,
            "entropy_coef": self.entropy_coef,
            "lr": self.lr,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "seed_rotation_period": self.seed_rotation_period,
            "seeds": list(self.seeds),
            "optimizer": self.optimizer,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config field(s): {sorted(unknown)}")
        if "seeds" in data:
            data = dict(data)
            data["seeds"] = tuple(data["seeds"])
        return cls(**data)


@dataclass(frozen=True)
class RewardConfig:
    kind: str = "neg_ema"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in metrics.REWARD_KINDS:
            raise ConfigError(f"reward kind must be one of {metrics.REWARD_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"reward alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown reward config field(s): {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Transition:
    state: StateVector
    action: float
    log_prob: float
    reward: float
    value: float
    done: bool


class RolloutBuffer:
    """One episode of transitions plus the post-GAE training targets."""

    def __init__(self):
        self._state_vectors: list[StateVector] = []
        self._actions: list[float] = []
        self._log_probs: list[float] = []
        self._rewards: list[float] = []
        self._dones: list[bool] = []
        self.raw_trace: list[float] = []
        self.corrected_trace: list[float] = []
        self.states: np.ndarray | None = None
        self.actions: np.ndarray | None = None
        self.log_probs: np.ndarray | None = None
        self.rewards: np.ndarray | None = None
        self.values: np.ndarray | None = None
        self.dones: np.ndarray | None = None
        self.advantages: np.ndarray | None = None
        self.returns: np.ndarray | None = None

    def add(self, state: StateVector, action: float, log_prob: float, reward: float, done: bool) -> None:
        if not all(math.isfinite(v) for v in (action, log_prob, reward)):
            raise DivergenceError(
                f"non-finite transition at step {len(self._actions)}",
                diagnostics={"action": action, "log_prob": log_prob, "reward": reward},
            )
        self._state_vectors.append(state)
        self._actions.append(action)
        self._log_probs.append(log_prob)
        self._rewards.append(reward)
        self._dones.append(done)

    def finalize(self, values: np.ndarray) -> None:
        n = len(self._actions)
        if np.shape(values) != (n,):
            raise UsageError(f"values shape {np.shape(values)} does not match buffer length {n}")
        self.states = np.asarray([s.values for s in self._state_vectors], dtype=np.float64)
        self.actions = np.asarray(self._actions, dtype=np.float64)
        self.log_probs = np.asarray(self._log_probs, dtype=np.float64)
        self.rewards = np.asarray(self._rewards, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        self.dones = np.asarray(self._dones, dtype=bool)

    def __len__(self) -> int:
        return len(self._actions)

    def transitions(self) -> list[Transition]:
        if self.values is None:
            raise UsageError("buffer not finalized")
        return [
            Transition(s, float(a), float(lp), float(r), float(v), bool(d))
            for s, a, lp, r, v, d in zip(
                self._state_vectors, self._actions, self._log_probs, self._rewards, self.values, self._dones
            )
        ]


def collect_rollout(
    env: SpillEnv,
    actor,
    critic: gradnet.DenseNet,
    reward_cfg: RewardConfig,
    rng: Xoshiro256StarStar | None = None,
    deterministic: bool = False,
) -> RolloutBuffer:
    """Run one full episode and return the finalized buffer.

    The decision after observing x_t is applied to x_{t+1} (the env's
    one-step delay); the stored action is the pre-clamp Gaussian sample and
    Act features see the clamped, actually-applied value. With
    deterministic=True the mean action is used and no rng is consumed.
    """
    if env.state is None or env.state.t != 0:
        raise UsageError("collect_rollout needs a freshly reset env")
    if not deterministic and rng is None:
        raise UsageError("stochastic rollout needs an rng")
    cfg = env.config
    tracker = StateTracker(cfg, actor.variant)
    racc = metrics.RewardAccumulator(reward_cfg.kind, reward_cfg.alpha, cfg.steps_per_episode)
    buffer = RolloutBuffer()
    pending = 0.0
    done = False
    t = 0
    while not done:
        try:
            obs, done = env.step(pending)
            sv = tracker.push(env.raw_trace[-1], obs, pending)
            reward = racc.push(abs(obs - cfg.reference))
            if deterministic:
                action = actor.mean(sv)
                log_prob = gaussian_log_prob(action, action, float(actor.log_std_arr[0]))
            else:
                action, log_prob = actor.sample(sv, rng)
        except SpillRegError as exc:
            raise type(exc)(f"rollout step {t}: {exc}") from exc
        buffer.add(sv, action, log_prob, reward, done)
        pending = clamp_action(action, cfg.action_bound)
        t += 1
    buffer.raw_trace = list(env.raw_trace)
    buffer.corrected_trace = list(env.corrected_trace)
    n = len(buffer)
    inputs = critic_inputs(buffer_states_array(buffer), np.arange(n), n, actor.variant)
    values, _ = gradnet.forward(critic, inputs)
    buffer.finalize(values[:, 0])
    return buffer


def buffer_states_array(buffer: RolloutBuffer) -> np.ndarray:
    if buffer.states is not None:
        return buffer.states
    return np.asarray([s.values for s in buffer._state_vectors], dtype=np.float64)


def critic_inputs(states: np.ndarray, steps: np.ndarray, horizon: int, variant: str) -> np.ndarray:
    """Scaled state features plus normalized episode time.

    Episodes have a fixed horizon, so the value of a state depends strongly
    on how much episode is left; the critic sees t/T as an extra input. The
    policy never does (its feature set is part of the controller contract).
    """
    scaled = states / feature_scales(variant)
    t_frac = (np.asarray(steps, dtype=np.float64) / horizon)[:, None]
    return np.concatenate([scaled, t_frac], axis=1)


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """GAE advantages and returns (unnormalized; terminal bootstrap 0).

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    returns = advantages + values
    """
    if buffer.values is None:
        raise UsageError("buffer not finalized; values missing")
    rewards, values, dones = buffer.rewards, buffer.values, buffer.dones
    n = len(buffer)
    advantages = np.zeros(n, dtype=np.float64)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        v_next = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * v_next * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        advantages[t] = gae
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Per-buffer normalization to mean 0, std 1 (identity for length <= 1)."""
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.size <= 1:
        return adv.copy()
    return (adv - adv.mean()) / (adv.std() + 1e-8)


@dataclass
class LossReport:
    actor_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def _minibatch_step(actor, critic, states, actions, logp_old, advantages, returns, cfg, steps, horizon):
    """Loss components and exact gradients for one minibatch.

    Returns (components, actor_grads, critic_grads) where actor_grads aligns
    with actor.mean_params() + [log_std] and critic_grads with
    critic.parameters(). Gradients are for the total loss
    actor + value_coef * value - entropy_coef * entropy.
    """
    n = states.shape[0]
    log_std = float(actor.log_std_arr[0])
    std = math.exp(log_std)

    mu, tape = actor.mean_batch(states)
    z = (actions - mu) / std
    logp_new = -0.5 * z * z - log_std - 0.5 * math.log(2.0 * math.pi)
    ratio = np.exp(logp_new - logp_old)
    surr1 = ratio * advantages
    clipped_ratio = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr2 = clipped_ratio * advantages
    per_sample = np.minimum(surr1, surr2)
    actor_loss = -float(per_sample.mean())
    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
    entropy = log_std + 0.5 * math.log(2.0 * math.pi * math.e)

    v_out, v_tape = gradnet.forward(critic, critic_inputs(states, steps, horizon, actor.variant))
    v = v_out[:, 0]
    v_err = v - returns
    value_loss = float(np.mean(v_err * v_err))

    if not (math.isfinite(actor_loss) and math.isfinite(value_loss)):
        raise DivergenceError(
            "non-finite loss in ppo update",
            diagnostics={"actor_loss": actor_loss, "value_loss": value_loss},
        )

    # d(actor_loss)/d(ratio): only the unclipped branch carries gradient
    # (inside the clip band both branches coincide, so ties route cleanly)
    active = surr1 <= surr2
    dratio = np.where(active, advantages, 0.0) * (-1.0 / n)
    dlogp = dratio * ratio
    dmu = dlogp * z / std  # d logp / d mu = z / std
    dlogstd_actor = float(np.dot(dlogp, z * z - 1.0))
    dlogstd = dlogstd_actor - cfg.entropy_coef * 1.0

    actor_grads = actor.mean_grads(tape, dmu)
    actor_grads = [*actor_grads, np.asarray([dlogstd])]

    dv = cfg.value_coef * (2.0 / n) * v_err
    critic_grads = gradnet.backward(critic, v_tape, dv[:, None]).params

    components = LossReport(
        actor_loss=actor_loss,
        value_loss=value_loss,
        entropy=entropy,
        clip_fraction=clip_fraction,
    )
    return components, actor_grads, critic_grads


def surrogate_losses(
    actor, critic, states, actions, logp_old, advantages, returns, cfg,
    steps=None, horizon=None,
) -> LossReport:
    """Loss components only, via the same code path ppo_update optimizes."""
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    components, _, _ = _minibatch_step(
        actor,
        critic,
        states,
        np.asarray(actions, dtype=np.float64),
        np.asarray(logp_old, dtype=np.float64),
        np.asarray(advantages, dtype=np.float64),
        np.asarray(returns, dtype=np.float64),
        cfg,
        steps=np.arange(n) if steps is None else np.asarray(steps),
        horizon=n if horizon is None else horizon,
    )
    return components


class _Opt:
    """Pairs optimizer state with its step function over fixed params."""

    def __init__(self, kind: str, params: list[np.ndarray], lr: float):
        self.params = params
        self.state, self._fn = gradnet.optimizer_for(kind, params, lr)

    def step(self, grads: list[np.ndarray]) -> None:
        self._fn(self.state, self.params, grads)


def ppo_update(
    actor,
    critic: gradnet.DenseNet,
    buffer: RolloutBuffer,
    cfg: TrainConfig,
    rng: Xoshiro256StarStar,
    actor_opt: _Opt,
    critic_opt: _Opt,
) -> LossReport:
    """Clipped-surrogate update: epochs_per_iter passes of shuffled minibatches."""
    if buffer.advantages is None or buffer.returns is None:
        raise UsageError("buffer has no advantages; run compute_gae + normalize first")
    n = len(buffer)
    if cfg.minibatch > n:
        raise ConfigError(f"minibatch {cfg.minibatch} exceeds buffer length {n}")
    sums = np.zeros(4)
    batches = 0
    for _ in range(cfg.epochs_per_iter):
        # argsort of iid uniforms is a uniform random permutation
        keys = np.asarray([rng.random() for _ in range(n)])
        perm = np.argsort(keys, kind="stable")
        for start in range(0, n, cfg.minibatch):
            mb = perm[start : start + cfg.minibatch]
            components, actor_grads, critic_grads = _minibatch_step(
                actor,
                critic,
                buffer.states[mb],
                buffer.actions[mb],
                buffer.log_probs[mb],
                buffer.advantages[mb],
                buffer.returns[mb],
                cfg,
                steps=mb,
                horizon=n,
            )
            actor_opt.step(actor_grads)
            actor.finalize_update()
            critic_opt.step(critic_grads)
            critic.bump_version()
            sums += (
                components.actor_loss,
                components.value_loss,
                components.entropy,
                components.clip_fraction,
            )
            batches += 1
    means = sums / batches
    return LossReport(
        actor_loss=float(means[0]),
        value_loss=float(means[1]),
        entropy=float(means[2]),
        clip_fraction=float(means[3]),
    )


def make_critic(state_dim: int, rng: Xoshiro256StarStar) -> gradnet.DenseNet:
    """Two-hidden-layer (64x64) tanh value network over state + episode time."""
    return gradnet.init_dense([state_dim + 1, 64, 64, 1], ["tanh", "tanh", "identity"], rng)


def evaluate_actor_sdf(env_cfg: EnvConfig, actor, seed: int) -> float:
    """SDF of one deterministic (mean-action) closed-loop episode."""
    env = SpillEnv(env_cfg)
    env.reset(seed)
    tracker = StateTracker(env_cfg, actor.variant)
    pending = 0.0
    done = False
    while not done:
        obs, done = env.step(pending)
        sv = tracker.push(env.raw_trace[-1], obs, pending)
        pending = clamp_action(actor.mean(sv), env_cfg.action_bound)
    return metrics.sdf(env.corrected_trace).sdf


def build_report(
    env_cfg: EnvConfig,
    gains: PidGains,
    actor,
    seeds: tuple[int, ...],
    threads: int = 1,
) -> ImprovementReport:
    """Per-seed noise/PID/RL SDF comparison, merged in seed order."""

    def one_seed(seed: int) -> SeedResult:
        return SeedResult(
            seed=seed,
            sdf_noise=metrics.sdf(run_raw_episode(env_cfg, seed)).sdf,
            sdf_pid=metrics.sdf(run_pid_episode(env_cfg, seed, gains)).sdf,
            sdf_rl=evaluate_actor_sdf(env_cfg, actor, seed),
        )

    report = ImprovementReport()
    if threads > 1 and len(seeds) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
            for result in pool.map(one_seed, seeds):
                report.add(result)
    else:
        for seed in seeds:
            report.add(one_seed(seed))
    return report


@dataclass
class TrainResult:
    actor: LinearActor | NnActor
    critic: gradnet.DenseNet
    report: ImprovementReport
    curve_rows: list[dict] = field(default_factory=list)
    gains: PidGains | None = None
    checkpoint: dict | None = None


def train(
    train_cfg: TrainConfig,
    env_cfg: EnvConfig,
    reward_cfg: RewardConfig | None = None,
    policy_variant: str = "pid",
    state_variant: str = "pid_act",
    master_seed: int = 0,
    gains: PidGains | None = None,
    threads: int = 1,
    on_iteration: Callable[[int, dict], None] | None = None,
) -> TrainResult:
    """Full training run: tune (if needed), iterate collect/GAE/update, evaluate.

    The env seed rotates through train_cfg.seeds every seed_rotation_period
    episodes, so within one rotation slot every episode replays the same
    noise realization; the stochastic policy still sees different corrected
    traces through its own exploration. On divergence the exception carries
    the last good checkpoint in its .diagnostics["last_good"] entry.
    """
    train_cfg.validate()
    env_cfg.validate()
    if reward_cfg is None:
        reward_cfg = RewardConfig(kind="neg_ema", alpha=train_cfg.alpha)
    if gains is None:
        gains = tune_pid(env_cfg, list(train_cfg.seeds))

    init_rng = Xoshiro256StarStar(derive_seed(master_seed, STREAM_INIT))
    actor = make_actor(policy_variant, state_variant, gains, init_rng)
    critic = make_critic(STATE_DIMS[state_variant], init_rng)
    sample_rng = Xoshiro256StarStar(derive_seed(master_seed, STREAM_SAMPLE))
    shuffle_rng = Xoshiro256StarStar(derive_seed(master_seed, STREAM_SHUFFLE))

    actor_opt = _Opt(train_cfg.optimizer, [*actor.mean_params(), actor.log_std_arr], train_cfg.lr)
    critic_opt = _Opt(train_cfg.optimizer, critic.parameters(), train_cfg.lr)

    def snapshot(iterations_done: int) -> dict:
        return checkpoint_dict(
            actor, critic, actor_opt, critic_opt, train_cfg, env_cfg, reward_cfg,
            gains, policy_variant, state_variant, master_seed, iterations_done,
        )

    curve_rows: list[dict] = []
    last_good = snapshot(0)
    for it in range(train_cfg.iterations):
        slot = (it // train_cfg.seed_rotation_period) % len(train_cfg.seeds)
        ep_seed = train_cfg.seeds[slot]
        env = SpillEnv(env_cfg)
        env.reset(ep_seed)
        try:
            buffer = collect_rollout(env, actor, critic, reward_cfg, sample_rng)
            advantages, returns = compute_gae(buffer, train_cfg.gamma, train_cfg.gae_lambda)
            buffer.advantages = normalize_advantages(advantages)
            buffer.returns = returns
            ppo_update(actor, critic, buffer, train_cfg, shuffle_rng, actor_opt, critic_opt)
        except DivergenceError as exc:
            exc.diagnostics["iteration"] = it
            exc.diagnostics["last_good"] = last_good
            raise
        row = {
            "iter": it,
            "seed": ep_seed,
            "mean_reward": float(buffer.rewards.mean()),
            "sdf_rl": metrics.sdf(buffer.corrected_trace).sdf,
            "sdf_pid": metrics.sdf(run_pid_episode(env_cfg, ep_seed, gains)).sdf,
            "sdf_noise": metrics.sdf(run_raw_episode(env_cfg, ep_seed)).sdf,
        }
        curve_rows.append(row)
        if on_iteration is not None:
            on_iteration(it, row)
        last_good = snapshot(it + 1)

    report = build_report(env_cfg, gains, actor, train_cfg.seeds, threads=threads)
    return TrainResult(
        actor=actor,
        critic=critic,
        report=report,
        curve_rows=curve_rows,
        gains=gains,
        checkpoint=last_good,
    )


def format_curve_csv(rows: list[dict]) -> str:
    lines = ["iter,seed,mean_reward,sdf_rl,sdf_pid,sdf_noise"]
    for r in rows:
        lines.append(
            f"{r['iter']},{r['seed']},{r['mean_reward']!r},{r['sdf_rl']!r},{r['sdf_pid']!r},{r['sdf_noise']!r}"
        )
    return "\n".join(lines) + "\n"


# --- checkpoints ------------------------------------------------------------

def _optimizer_to_dict(opt: _Opt) -> dict:
    if isinstance(opt.state, gradnet.AdamState):
        return gradnet.adam_to_dict(opt.state)
    return {"kind": "sgd", "lr": opt.state.lr, "step": opt.state.step}


def _optimizer_restore(data: dict, opt: _Opt) -> None:
    if data["kind"] == "adam":
        opt.state = gradnet.adam_from_dict(data, opt.params)
    elif data["kind"] == "sgd":
        opt.state.lr = float(data["lr"])
        opt.state.step = int(data["step"])
    else:
        raise CheckpointError(f"unknown optimizer kind {data['kind']!r}")


def checkpoint_dict(
    actor, critic, actor_opt, critic_opt, train_cfg, env_cfg, reward_cfg,
    gains, policy_variant, state_variant, master_seed, iterations_done,
) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "policy_variant": policy_variant,
        "state_variant": state_variant,
        "master_seed": master_seed,
        "iterations_done": iterations_done,
        "actor": actor.to_dict(),
        "critic": gradnet.net_to_dict(critic),
        "critic_feature_scales": [float(s) for s in feature_scales(state_variant)],
        "actor_opt": _optimizer_to_dict(actor_opt),
        "critic_opt": _optimizer_to_dict(critic_opt),
        "gains": gains.to_dict(),
        "env": env_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "reward": reward_cfg.to_dict(),
    }


def save_checkpoint(path, data: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format_version {version!r} unsupported (expected {CHECKPOINT_VERSION})"
        )
    return data


def restore_from_checkpoint(data: dict):
    """Rebuild (actor, critic, env_cfg, gains, train_cfg, reward_cfg) from a checkpoint dict."""
    actor = actor_from_dict(data["actor"])
    critic = gradnet.net_from_dict(data["critic"])
    env_cfg = EnvConfig.from_dict(data["env"])
    gains = PidGains.from_dict(data["gains"])
    train_cfg = TrainConfig.from_dict(data["train"])
    reward_cfg = RewardConfig.from_dict(data["reward"])
    return actor, critic, env_cfg, gains, train_cfg, reward_cfg
