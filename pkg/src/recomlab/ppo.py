"""Clipped-surrogate PPO on top of :mod:`recomlab.nn`."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from recomlab import nn
from recomlab.plasticity import dormant_ratio


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    epochs: int = 10
    minibatch_size: int = 64
    horizon: int = 2048
    n_envs: int = 1
    learning_rate: float = 3e-4
    max_grad_norm: float = 0.5
    normalize_advantage: bool = True

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if (self.horizon * self.n_envs) % self.minibatch_size:
            raise ValueError(
                f"minibatch_size {self.minibatch_size} must divide horizon*n_envs "
                f"= {self.horizon * self.n_envs}"
            )


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (H, n, obs_dim)
    actions: np.ndarray  # (H, n, act_dim), pre-clip samples
    log_probs: np.ndarray  # (H, n)
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    last_value: np.ndarray  # (n,) value of the observation after the final step
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    episode_returns: list[float] = field(default_factory=list)
    crashes: int = 0

    @property
    def horizon(self) -> int:
        return self.obs.shape[0]

    def flat(self) -> dict[str, np.ndarray]:
        n = self.obs.shape[0] * self.obs.shape[1]
        return {
            "obs": self.obs.reshape(n, -1),
            "actions": self.actions.reshape(n, -1),
            "log_probs": self.log_probs.reshape(n),
            "advantages": self.advantages.reshape(n),
            "returns": self.returns.reshape(n),
            "values": self.values.reshape(n),
        }


def sample_action(params, obs, rng: np.random.Generator, deterministic: bool = False):
    mean, log_std = nn.forward_policy(params, obs)
    if deterministic:
        action = mean
    else:
        action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return action, nn.gaussian_log_prob(action, mean, log_std)


def collect_rollout(params, envs, horizon: int, rng: np.random.Generator, obs: np.ndarray,
                    deterministic: bool = False, gamma: float | None = None):
    """Run ``horizon`` steps in every env from ``obs``.

    Returns the buffer and the observation to continue from. Actions are
    stored as sampled; the env clips them to ``[-1, 1]``. With ``gamma``
    set, a step that ends an episode by time limit gets ``gamma * V`` of its
    final observation added to the stored reward (episode returns are
    unaffected).
    """
    n = envs.n
    buf = dict(
        obs=np.zeros((horizon, n, obs.shape[-1])),
        actions=np.zeros((horizon, n, nn.ACT_DIM)),
        log_probs=np.zeros((horizon, n)),
        rewards=np.zeros((horizon, n)),
        values=np.zeros((horizon, n)),
        dones=np.zeros((horizon, n)),
    )
    episode_returns: list[float] = []
    crashes = 0
    for t in range(horizon):
        action, logp = sample_action(params, obs, rng, deterministic)
        buf["obs"][t] = obs
        buf["actions"][t] = action
        buf["log_probs"][t] = logp
        buf["values"][t] = nn.forward_value(params, obs)
        obs, reward, done, info = envs.step(action)
        buf["rewards"][t] = reward
        buf["dones"][t] = done
        if gamma is not None and np.any(info.get("truncated", False)):
            cut = np.flatnonzero(info["truncated"])
            buf["rewards"][t, cut] += gamma * nn.forward_value(params, info["terminal_obs"][cut])
        if "episode_returns" in info:
            episode_returns.extend(float(r) for r in info["episode_returns"])
            crashes += int(np.sum(info["crashed"]))
    last_value = nn.forward_value(params, obs)
    return RolloutBuffer(**buf, last_value=last_value, episode_returns=episode_returns,
                         crashes=crashes), obs


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Generalized advantage estimates and returns over axis 0.

    ``dones[t]`` marks that the episode ended with step ``t``; ``last_value``
    bootstraps the step after the final one.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    adv = np.zeros_like(rewards)
    next_adv = np.zeros_like(rewards[0])
    next_value = np.asarray(last_value, dtype=np.float64)
    for t in reversed(range(len(rewards))):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        next_adv = delta + gamma * lam * nonterminal * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def standardize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


def _loss_def(mb: dict, cfg: PpoConfig, out: dict):
    actions = mb["actions"]
    old_logp = mb["log_probs"]
    adv = standardize(mb["advantages"]) if cfg.normalize_advantage else mb["advantages"]
    returns = mb["returns"]
    eps = cfg.clip_eps

    def loss_def(mean, log_std, value):
        B = mean.shape[0]
        inv_var = np.exp(-2.0 * log_std)
        diff = actions - mean
        logp = nn.gaussian_log_prob(actions, mean, log_std)
        log_ratio = logp - old_logp
        with np.errstate(over="ignore"):
            ratio = np.exp(log_ratio)
        bad = np.flatnonzero(~np.isfinite(ratio))
        if bad.size:
            raise FloatingPointError(f"non-finite probability ratio at minibatch index {bad[0]}")
        surr1 = ratio * adv
        clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
        surr2 = clipped * adv
        policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
        value_loss = float(np.mean((value - returns) ** 2))
        entropy = nn.gaussian_entropy(log_std)
        total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

        in_range = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
        active = in_range | (surr1 < surr2)
        d_logp = -np.where(active, adv, 0.0) * ratio / B
        d_mean = d_logp[:, None] * diff * inv_var
        d_log_std = (d_logp[:, None] * (diff**2 * inv_var - 1.0)).sum(axis=0) - cfg.entropy_coef
        d_value = cfg.value_coef * 2.0 * (value - returns) / B

        out.update(
            policy_loss=policy_loss,
            value_loss=value_loss,
            entropy=entropy,
            total_loss=total,
            clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
            ratio=ratio,
            advantages=adv,
        )
        return total, d_mean, d_log_std, d_value

    return loss_def


def ppo_loss(params, minibatch: dict, cfg: PpoConfig):
    """Total PPO loss and its components for one minibatch (no gradient)."""
    out: dict = {}
    mean, log_std = nn.forward_policy(params, minibatch["obs"])
    value = nn.forward_value(params, minibatch["obs"])
    total, *_ = _loss_def(minibatch, cfg, out)(mean, log_std, value)
    return total, out


def ppo_loss_and_grad(params, minibatch: dict, cfg: PpoConfig):
    out: dict = {}
    loss, grads = nn.backward(params, minibatch["obs"], _loss_def(minibatch, cfg, out))
    return loss, grads, out


def ppo_update(params, adam: nn.AdamState, buffer: RolloutBuffer, cfg: PpoConfig, lr: float,
               l2_lambda: float, rng: np.random.Generator):
    """``epochs`` passes of shuffled minibatch Adam steps. Returns params, adam, stats."""
    data = buffer.flat()
    n = data["obs"].shape[0]
    stats = {k: [] for k in ("policy_loss", "value_loss", "entropy", "total_loss", "clip_fraction")}
    first_ratio_dev = None
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start:start + cfg.minibatch_size]
            mb = {k: v[idx] for k, v in data.items()}
            _, grads, out = ppo_loss_and_grad(params, mb, cfg)
            if first_ratio_dev is None:
                first_ratio_dev = float(np.max(np.abs(out["ratio"] - 1.0)))
            if lr > 0:
                g = nn.flatten(grads)
                norm = float(np.sqrt(g @ g))
                if cfg.max_grad_norm is not None and norm > cfg.max_grad_norm:
                    g = g * (cfg.max_grad_norm / (norm + 1e-6))
                params, adam = nn.adam_step(params, g, adam, lr, l2_lambda)
            for k in stats:
                stats[k].append(out[k])
    summary = {k: float(np.mean(v)) for k, v in stats.items()}
    summary["first_ratio_deviation"] = first_ratio_dev
    return params, adam, summary


METRIC_FIELDS = (
    "global_step",
    "mean_episode_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "total_loss",
    "learning_rate",
    "clip_fraction",
    "dormant_ratio",
    "wind_speed",
)


@dataclass
class Metrics:
    global_step: int
    mean_episode_reward: float
    policy_loss: float
    value_loss: float
    entropy: float
    total_loss: float
    learning_rate: float
    clip_fraction: float
    dormant_ratio: float
    wind_speed: float

    def row(self) -> dict:
        return asdict(self)


assert tuple(f.name for f in fields(Metrics)) == METRIC_FIELDS


@dataclass
class TrainState:
    params: nn.Params
    adam: nn.AdamState
    rng: np.random.Generator
    obs: np.ndarray
    global_step: int = 0
    iteration: int = 0
    last_mean_reward: float = float("nan")


def train_iteration(state: TrainState, envs, recom, cfg: PpoConfig, l2_lambda: float = 0.0,
                    dormant_tau: float = 0.025, probe_size: int = 512,
                    constant_lr: float | None = None) -> tuple[Metrics, RolloutBuffer]:
    """Collect one rollout, run the PPO update, feed RECOM, and emit a metrics row.

    ``recom`` may be ``None``; the learning rate is then ``constant_lr`` (or
    ``cfg.learning_rate``).
    """
    wind_speed = float(np.mean(envs.wind_speed))
    buffer, state.obs = collect_rollout(state.params, envs, cfg.horizon, state.rng, state.obs,
                                        gamma=cfg.gamma)
    state.global_step += cfg.horizon * envs.n
    buffer.advantages, buffer.returns = compute_gae(
        buffer.rewards, buffer.values, buffer.dones, buffer.last_value, cfg.gamma, cfg.gae_lambda
    )
    if recom is not None:
        lr = recom.lr
    else:
        lr = cfg.learning_rate if constant_lr is None else constant_lr
    state.params, state.adam, stats = ppo_update(
        state.params, state.adam, buffer, cfg, lr, l2_lambda, state.rng
    )
    if recom is not None:
        recom.record(buffer.episode_returns, stats["total_loss"])
        recom.update_lr(state.global_step)

    probe = buffer.obs.reshape(-1, buffer.obs.shape[-1])
    if probe.shape[0] > probe_size:
        probe = probe[-probe_size:]
    report = dormant_ratio(state.params, probe, dormant_tau, global_step=state.global_step)

    if buffer.episode_returns:
        state.last_mean_reward = float(np.mean(buffer.episode_returns))
    state.iteration += 1
    metrics = Metrics(
        global_step=state.global_step,
        mean_episode_reward=state.last_mean_reward,
        policy_loss=stats["policy_loss"],
        value_loss=stats["value_loss"],
        entropy=stats["entropy"],
        total_loss=stats["total_loss"],
        learning_rate=lr,
        clip_fraction=stats["clip_fraction"],
        dormant_ratio=report.dormant_ratio,
        wind_speed=wind_speed,
    )
    return metrics, buffer
