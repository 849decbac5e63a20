"""Actor-critic policy, GAE, and the clipped-surrogate PPO update.

Sign convention: environments emit costs; rewards used internally are their
negation, so maximizing reward minimizes accumulated cost.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Protocol, Tuple

import numpy as np

from .nets import Array, Mlp, make_optimizer, mlp_forward, mlp_gradient, mlp_init
from .simcore import NonFiniteError

LOG_2PI = math.log(2.0 * math.pi)

POLICY_FORMAT_VERSION = 1


@dataclass(eq=False)
class Policy:
    """Gaussian actor (state-independent log stds) plus a scalar critic.

    Observations are multiplied elementwise by obs_scale before either network
    sees them; the scaling constants travel with the policy file.
    """

    actor: Mlp
    critic: Mlp
    log_std: Array
    obs_scale: Array

    def __post_init__(self):
        if self.actor.out_dim != self.log_std.shape[0]:
            raise ValueError("actor output dim must equal log_std length")


@dataclass
class PpoConfig:
    learning_rate: float = 1e-4
    discount: float = 0.99
    clip_range: float = 0.2
    gae_lambda: float = 0.95
    epochs_per_batch: int = 10
    minibatch_size: int = 256
    steps_per_batch: int = 4096
    total_steps: int = 1_000_000
    value_loss_coefficient: float = 0.5
    entropy_coefficient: float = 0.0
    rng_seed: int = 0
    hidden_sizes: Tuple[int, ...] = (64, 64)
    optimizer: str = "sgd"
    log_std_init: float = -0.7
    # "linear" anneals the step size to 5% over total_steps; late PPO batches
    # otherwise have enough variance to wreck a converged policy
    lr_schedule: str = "constant"
    # success-gated start-state curriculum for training environments that
    # support it: number of gate-passing episodes to traverse the full spread
    # (0 disables); evaluation always draws from the configured distribution
    curriculum_episodes: int = 0

    def __post_init__(self):
        if not 0 < self.discount < 1:
            raise ValueError("discount must lie in (0, 1)")
        if not 0 < self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if self.clip_range <= 0:
            raise ValueError("clip_range must be positive")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError("lr_schedule must be 'constant' or 'linear'")


def init_policy(
    obs_dim: int,
    act_dim: int,
    cfg: PpoConfig,
    rng: np.random.Generator,
    obs_scale: Optional[Array] = None,
) -> Policy:
    sizes = [obs_dim, *cfg.hidden_sizes]
    actor = mlp_init(sizes + [act_dim], rng, out_scale=0.01)
    critic = mlp_init(sizes + [1], rng)
    scale = np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, dtype=float)
    return Policy(
        actor=actor,
        critic=critic,
        log_std=np.full(act_dim, cfg.log_std_init),
        obs_scale=scale,
    )


def _scaled(policy: Policy, obs: Array) -> Array:
    return np.asarray(obs, dtype=float) * policy.obs_scale


def policy_mean_action(policy: Policy, obs: Array) -> Array:
    """Deterministic evaluation mode: the actor mean."""
    return mlp_forward(policy.actor, _scaled(policy, obs))


def policy_value(policy: Policy, obs: Array) -> Array:
    v = mlp_forward(policy.critic, _scaled(policy, obs))
    return v[..., 0] if v.ndim > 1 else v[0]


def gaussian_log_prob(mean: Array, log_std: Array, action: Array) -> Array:
    """Diagonal-Gaussian log density; batched over leading axes."""
    z = (action - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * len(log_std) * LOG_2PI


def policy_sample(
    policy: Policy, obs: Array, rng: np.random.Generator
) -> Tuple[Array, float]:
    """Draw action = mean + exp(log_std) * N(0, I) and return its log density."""
    mean = policy_mean_action(policy, obs)
    noise = rng.standard_normal(mean.shape[0])
    action = mean + np.exp(policy.log_std) * noise
    return action, float(gaussian_log_prob(mean, policy.log_std, action))


def policy_entropy(policy: Policy) -> float:
    d = policy.log_std.shape[0]
    return float(np.sum(policy.log_std) + 0.5 * d * (1.0 + LOG_2PI))


def gae_advantages(
    costs: Array,
    values: Array,
    discount: float,
    gae_lambda: float,
    dones: Optional[Array] = None,
) -> Array:
    """Generalized advantage estimates on rewards = -costs.

    values has one bootstrap entry beyond the steps; dones marks steps that
    ended an episode, truncating both the TD target and the recursion there.
    """
    costs = np.asarray(costs, dtype=float)
    values = np.asarray(values, dtype=float)
    T = costs.shape[0]
    if values.shape[0] != T + 1:
        raise ValueError("values must have one bootstrap entry beyond costs")
    if dones is None:
        dones = np.zeros(T, dtype=bool)
    dones = np.asarray(dones, dtype=bool)
    rewards = -costs
    adv = np.empty(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + discount * nonterminal * values[t + 1] - values[t]
        acc = delta + discount * gae_lambda * nonterminal * acc
        adv[t] = acc
    return adv


@dataclass(eq=False)
class PpoBatch:
    obs: Array
    actions: Array
    old_log_probs: Array
    advantages: Array
    value_targets: Array


def _policy_params(policy: Policy) -> List[Array]:
    return (
        list(policy.actor.weights)
        + list(policy.actor.biases)
        + list(policy.critic.weights)
        + list(policy.critic.biases)
        + [policy.log_std]
    )


def _rebuild_policy(policy: Policy, params: List[Array]) -> Policy:
    na = len(policy.actor.weights)
    nc = len(policy.critic.weights)
    i = 0
    aw = params[i : i + na]; i += na
    ab = params[i : i + na]; i += na
    cw = params[i : i + nc]; i += nc
    cb = params[i : i + nc]; i += nc
    log_std = params[i]
    return Policy(
        actor=Mlp(weights=aw, biases=ab),
        critic=Mlp(weights=cw, biases=cb),
        log_std=log_std,
        obs_scale=policy.obs_scale,
    )


def ppo_update(
    policy: Policy,
    batch: PpoBatch,
    cfg: PpoConfig,
    rng: Optional[np.random.Generator] = None,
    optimizer=None,
) -> Tuple[Policy, bool]:
    """Clipped-surrogate update; advantages are expected pre-normalized.

    Returns (policy, aborted). A non-finite loss or gradient discards the whole
    batch and returns the input policy unchanged with aborted=True.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    if optimizer is None:
        optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    N = batch.obs.shape[0]
    eps = cfg.clip_range
    start_policy = policy
    scaled_obs_all = np.asarray(batch.obs, dtype=float) * policy.obs_scale

    for _ in range(cfg.epochs_per_batch):
        perm = rng.permutation(N)
        for lo in range(0, N, cfg.minibatch_size):
            idx = perm[lo : lo + cfg.minibatch_size]
            x = scaled_obs_all[idx]
            a = batch.actions[idx]
            adv = batch.advantages[idx]
            old_lp = batch.old_log_probs[idx]
            targets = batch.value_targets[idx]
            nb = idx.shape[0]

            mean = mlp_forward(policy.actor, x)
            values = mlp_forward(policy.critic, x)[:, 0]
            sigma = np.exp(policy.log_std)
            z = (a - mean) / sigma
            lp = -0.5 * np.sum(z * z, axis=1) - np.sum(policy.log_std) - 0.5 * a.shape[1] * LOG_2PI
            ratio = np.exp(lp - old_lp)

            surr = np.minimum(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv)
            v_err = values - targets
            loss = (
                -np.mean(surr)
                + cfg.value_loss_coefficient * np.mean(v_err**2)
                - cfg.entropy_coefficient * (np.sum(policy.log_std) + 0.5 * a.shape[1] * (1 + LOG_2PI))
            )
            if not np.isfinite(loss):
                return start_policy, True

            # d(-surr)/d(lp): zero where the clip saturates in the improving direction.
            active = ~(((ratio > 1 + eps) & (adv > 0)) | ((ratio < 1 - eps) & (adv < 0)))
            d_lp = -(ratio * adv * active) / nb
            d_mean = d_lp[:, None] * (a - mean) / sigma**2
            d_log_std = np.sum(d_lp[:, None] * (z * z - 1.0), axis=0)
            d_log_std += -cfg.entropy_coefficient * np.ones_like(policy.log_std)
            d_values = cfg.value_loss_coefficient * 2.0 * v_err[:, None] / nb

            aw_g, ab_g = mlp_gradient(policy.actor, x, d_mean)
            cw_g, cb_g = mlp_gradient(policy.critic, x, d_values)
            grads = aw_g + ab_g + cw_g + cb_g + [d_log_std]
            if not all(np.all(np.isfinite(g)) for g in grads):
                return start_policy, True

            params = optimizer.step(_policy_params(policy), grads)
            policy = _rebuild_policy(policy, params)
    return policy, False


class Env(Protocol):
    """Episodic environment contract used by train_ppo."""

    obs_dim: int
    act_dim: int

    def reset(self, seed: int) -> Array: ...

    def step(self, action: Array) -> Tuple[Array, float, bool]: ...


@dataclass(eq=False)
class TrainResult:
    policy: Policy
    batch_mean_costs: List[float]
    aborted_updates: int


def train_ppo(env: Env, cfg: PpoConfig) -> TrainResult:
    """Rollout / GAE / update loop until total_steps environment steps.

    Episode seeds advance deterministically from cfg.rng_seed, so identical
    (env, cfg) pairs produce bit-identical policies.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    policy = init_policy(env.obs_dim, env.act_dim, cfg, rng, getattr(env, "obs_scale", None))
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)

    n_batches = cfg.total_steps // cfg.steps_per_batch
    episode_idx = 0
    obs = None
    episode_cost = 0.0
    log: List[float] = []
    aborted = 0

    for batch_idx in range(n_batches):
        if cfg.lr_schedule == "linear":
            optimizer.lr = cfg.learning_rate * max(0.05, 1.0 - batch_idx / n_batches)
        T = cfg.steps_per_batch
        obs_buf = np.empty((T, env.obs_dim))
        act_buf = np.empty((T, env.act_dim))
        lp_buf = np.empty(T)
        cost_buf = np.empty(T)
        done_buf = np.zeros(T, dtype=bool)
        finished_costs: List[float] = []

        for t in range(T):
            if obs is None:
                obs = env.reset(seed=(cfg.rng_seed << 20) + episode_idx)
                episode_idx += 1
                episode_cost = 0.0
            if not np.all(np.isfinite(obs)):
                raise NonFiniteError("environment produced a non-finite observation")
            action, lp = policy_sample(policy, obs, rng)
            nxt, cost, done = env.step(action)
            obs_buf[t] = obs
            act_buf[t] = action
            lp_buf[t] = lp
            cost_buf[t] = cost
            done_buf[t] = done
            episode_cost += cost
            obs = None if done else nxt
            if done:
                finished_costs.append(episode_cost)

        values = mlp_forward(policy.critic, obs_buf * policy.obs_scale)[:, 0]
        if obs is None:
            bootstrap = 0.0  # final step ended an episode; mask kills it anyway
        else:
            bootstrap = float(policy_value(policy, obs))
        values_ext = np.append(values, bootstrap)
        adv = gae_advantages(cost_buf, values_ext, cfg.discount, cfg.gae_lambda, done_buf)
        targets = adv + values
        norm_adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        batch = PpoBatch(
            obs=obs_buf,
            actions=act_buf,
            old_log_probs=lp_buf,
            advantages=norm_adv,
            value_targets=targets,
        )
        policy, was_aborted = ppo_update(policy, batch, cfg, rng, optimizer)
        aborted += int(was_aborted)
        log.append(float(np.mean(finished_costs)) if finished_costs else math.nan)

    return TrainResult(policy=policy, batch_mean_costs=log, aborted_updates=aborted)


def save_policy(policy: Policy, path) -> None:
    """Structured text dump; floats round-trip exactly through repr/json."""
    doc = {
        "format_version": POLICY_FORMAT_VERSION,
        "actor": {
            "layer_shapes": [list(s) for s in policy.actor.layer_shapes],
            "weights": [w.tolist() for w in policy.actor.weights],
            "biases": [b.tolist() for b in policy.actor.biases],
        },
        "critic": {
            "layer_shapes": [list(s) for s in policy.critic.layer_shapes],
            "weights": [w.tolist() for w in policy.critic.weights],
            "biases": [b.tolist() for b in policy.critic.biases],
        },
        "log_std": policy.log_std.tolist(),
        "obs_scale": policy.obs_scale.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_policy(path) -> Policy:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != POLICY_FORMAT_VERSION:
        raise ValueError(f"unsupported policy file format: {doc.get('format_version')}")

    def _mlp(block) -> Mlp:
        ws = [np.asarray(w, dtype=float) for w in block["weights"]]
        bs = [np.asarray(b, dtype=float) for b in block["biases"]]
        shapes = [tuple(s) for s in block["layer_shapes"]]
        if [w.shape for w in ws] != shapes:
            raise ValueError("policy file layer shapes disagree with stored weights")
        return Mlp(weights=ws, biases=bs)

    return Policy(
        actor=_mlp(doc["actor"]),
        critic=_mlp(doc["critic"]),
        log_std=np.asarray(doc["log_std"], dtype=float),
        obs_scale=np.asarray(doc["obs_scale"], dtype=float),
    )
