"""Hover-task MDP around the quadrotor model.

``HoverVecEnv`` steps ``n`` independent vehicles in one batched RK4 call and
auto-resets finished episodes; ``HoverEnv`` is the single-vehicle view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from recomlab.dynamics import (
    MotorState,
    RobotParams,
    RobotState,
    SimulationDiverged,
    step_motors,
    wind_force,
)

OBS_DIM = 12
ACT_DIM = 4


@dataclass(frozen=True)
class RewardWeights:
    w_p: float = 1.0
    w_v: float = 0.5
    w_a: float = 1e-5

    def __post_init__(self):
        if min(self.w_p, self.w_v, self.w_a) < 0:
            raise ValueError("reward weights must be non-negative")


@dataclass(frozen=True)
class WindSchedule:
    segment_length: int = 2_000_000
    speeds: tuple[float, ...] = (3.0, 2.0, 2.5, 1.5, 2.5)
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    # draw a fresh horizontal direction per segment instead of ``direction``
    random_direction: bool = False

    def __post_init__(self):
        if not self.speeds:
            raise ValueError("wind schedule needs at least one speed")
        if self.segment_length <= 0:
            raise ValueError("segment_length must be positive")

    def index(self, global_timestep: int) -> int:
        return min(int(global_timestep) // self.segment_length, len(self.speeds) - 1)

    def speed_at(self, global_timestep: int) -> float:
        return float(self.speeds[self.index(global_timestep)])

    def direction_at(self, global_timestep: int, seed: int = 0) -> np.ndarray:
        if not self.random_direction:
            d = np.asarray(self.direction, dtype=np.float64)
            return d / np.linalg.norm(d)
        rng = np.random.default_rng([seed, self.index(global_timestep)])
        angle = rng.uniform(-np.pi, np.pi)
        return np.array([np.cos(angle), np.sin(angle), 0.0])


NO_WIND = WindSchedule(segment_length=1, speeds=(0.0,))


@dataclass(frozen=True)
class EpisodeConfig:
    max_steps: int = 500
    init_position_range: float = 2.0
    termination_radius: float = 5.0
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    dt: float = 0.01
    normalize_obs: bool = False

    def __post_init__(self):
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.init_position_range < 0 or self.termination_radius <= 0:
            raise ValueError("episode ranges must be positive")


def reward_total(p, v, a, weights: RewardWeights):
    """``-w_p |p| - w_v |v| - w_a |a|`` over the last axis."""
    return -(
        weights.w_p * np.linalg.norm(p, axis=-1)
        + weights.w_v * np.linalg.norm(v, axis=-1)
        + weights.w_a * np.linalg.norm(a, axis=-1)
    )


def euler_zyx(R: np.ndarray) -> np.ndarray:
    """Roll, pitch, yaw with ``R = Rz(yaw) Ry(pitch) Rx(roll)``; angles in (-pi, pi]."""
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    pitch = -np.arcsin(np.clip(R[..., 2, 0], -1.0, 1.0))
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    angles = np.stack([roll, pitch, yaw], axis=-1)
    return np.where(angles <= -np.pi, angles + 2 * np.pi, angles)


def rotation_zyx(angles: np.ndarray) -> np.ndarray:
    roll, pitch, yaw = np.moveaxis(np.asarray(angles, dtype=np.float64), -1, 0)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    R = np.empty(np.shape(roll) + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def observe(state: RobotState, target=(0.0, 0.0, 0.0)) -> np.ndarray:
    """12-dim observation: position error, velocity, ZYX Euler angles, body rates."""
    return np.concatenate(
        [state.p - np.asarray(target), state.v, euler_zyx(state.R), state.omega], axis=-1
    )


def action_to_motor(a: np.ndarray, params: RobotParams) -> np.ndarray:
    """Affine map ``[-1, 1] -> [0, max_thrust / 4]`` per motor (after clipping)."""
    return (np.clip(a, -1.0, 1.0) + 1.0) * (0.5 * params.motor_max)


def hover_action(params: RobotParams) -> np.ndarray:
    return np.full(ACT_DIM, 2.0 * (params.hover_thrust / 4.0) / params.motor_max - 1.0)


@dataclass
class EnvConfig:
    robot: RobotParams = field(default_factory=RobotParams)
    reward: RewardWeights = field(default_factory=RewardWeights)
    schedule: WindSchedule = field(default_factory=WindSchedule)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    wind_enabled: bool = True


class HoverVecEnv:
    """``n`` hover environments stepped together.

    Finished episodes are reset immediately; the terminal observation is
    returned in ``info["terminal_obs"]`` and the episode return in
    ``info["episode_returns"]``.
    """

    def __init__(self, cfg: EnvConfig, n_envs: int = 1, seed: int = 0):
        self.cfg = cfg
        self.n = n_envs
        self.seed = seed
        seeds = np.random.SeedSequence(seed).spawn(n_envs)
        self.rngs = [np.random.default_rng(s) for s in seeds]
        self.global_timestep = 0
        n = n_envs
        self.state = RobotState(np.zeros((n, 3)), np.zeros((n, 3)), np.tile(np.eye(3), (n, 1, 1)), np.zeros((n, 3)))
        self.motors = MotorState(np.zeros((n, 4)))
        self.steps = np.zeros(n, dtype=np.int64)
        self.returns = np.zeros(n)
        self.wind_speed = np.zeros(n)
        self.wind_dir = np.tile(np.array([1.0, 0.0, 0.0]), (n, 1))

    # -- episode management -------------------------------------------------
    def _reset_one(self, i: int):
        cfg = self.cfg
        r = cfg.episode.init_position_range
        p0 = self.rngs[i].uniform(-r, r, size=3) if r > 0 else np.zeros(3)
        self.state.p[i] = np.asarray(cfg.episode.target) + p0
        self.state.v[i] = 0.0
        self.state.R[i] = np.eye(3)
        self.state.omega[i] = 0.0
        self.motors.actual[i] = cfg.robot.hover_thrust / 4.0
        self.steps[i] = 0
        self.returns[i] = 0.0
        if cfg.wind_enabled:
            self.wind_speed[i] = cfg.schedule.speed_at(self.global_timestep)
            self.wind_dir[i] = cfg.schedule.direction_at(self.global_timestep, self.seed)
        else:
            self.wind_speed[i] = 0.0

    def reset(self, global_timestep: int | None = None) -> np.ndarray:
        if global_timestep is not None:
            self.global_timestep = int(global_timestep)
        for i in range(self.n):
            self._reset_one(i)
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.state, self.cfg.episode.target)

    def step(self, actions: np.ndarray):
        cfg = self.cfg
        a = np.clip(np.asarray(actions, dtype=np.float64).reshape(self.n, 4), -1.0, 1.0)
        d = wind_force(self.wind_speed, self.wind_dir, self.state, cfg.robot)
        crashed = np.zeros(self.n, dtype=bool)
        try:
            with np.errstate(all="ignore"):
                self.state, self.motors = step_motors(
                    self.state, self.motors, action_to_motor(a, cfg.robot), d, cfg.episode.dt, cfg.robot
                )
        except SimulationDiverged:
            with np.errstate(all="ignore"):
                self.state, self.motors = _step_unchecked(self.state, self.motors, a, d, cfg)
            crashed = ~np.all(
                np.isfinite(np.concatenate([self.state.p, self.state.v, self.state.omega,
                                            self.state.R.reshape(self.n, 9)], axis=1)),
                axis=1,
            )
        self.steps += 1
        self.global_timestep += self.n
        target = np.asarray(cfg.episode.target)
        reward = reward_total(self.state.p - target, self.state.v, a, cfg.reward)
        reward = np.where(crashed, 0.0, reward)
        self.returns += reward
        obs = self.observe()
        out_of_bounds = ~(np.linalg.norm(self.state.p - target, axis=1) <= cfg.episode.termination_radius)
        truncated = self.steps >= cfg.episode.max_steps
        terminated = out_of_bounds | crashed
        done = terminated | truncated
        info = {"crashed": crashed, "terminated": terminated, "truncated": truncated & ~terminated}
        if np.any(done):
            info["terminal_obs"] = np.where(np.isfinite(obs), obs, 0.0)
            info["episode_returns"] = self.returns[done].copy()
            info["episode_lengths"] = self.steps[done].copy()
            for i in np.flatnonzero(done):
                self._reset_one(i)
            obs = self.observe()
        return obs, reward, done, info

    # -- persistence ----------------------------------------------------------
    def get_state(self) -> dict:
        return {
            "global_timestep": self.global_timestep,
            "p": self.state.p.tolist(),
            "v": self.state.v.tolist(),
            "R": self.state.R.tolist(),
            "omega": self.state.omega.tolist(),
            "motors": self.motors.actual.tolist(),
            "steps": self.steps.tolist(),
            "returns": self.returns.tolist(),
            "wind_speed": self.wind_speed.tolist(),
            "wind_dir": self.wind_dir.tolist(),
            "rngs": [r.bit_generator.state for r in self.rngs],
        }

    def set_state(self, st: dict):
        self.global_timestep = int(st["global_timestep"])
        self.state = RobotState(*(np.array(st[k], dtype=np.float64) for k in ("p", "v", "R", "omega")))
        self.motors = MotorState(np.array(st["motors"], dtype=np.float64))
        self.steps = np.array(st["steps"], dtype=np.int64)
        self.returns = np.array(st["returns"], dtype=np.float64)
        self.wind_speed = np.array(st["wind_speed"], dtype=np.float64)
        self.wind_dir = np.array(st["wind_dir"], dtype=np.float64)
        for r, s in zip(self.rngs, st["rngs"]):
            r.bit_generator.state = s


class ObsNormalizer:
    """Running mean and variance of observations; emits clipped z-scores."""

    def __init__(self, dim: int = OBS_DIM, clip: float = 10.0, eps: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip
        self.eps = eps

    def update(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.mean.size)
        n = x.shape[0]
        mean, var = x.mean(axis=0), x.var(axis=0)
        delta = mean - self.mean
        total = self.count + n
        m2 = self.var * self.count + var * n + delta**2 * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": self.count,
                "clip": self.clip, "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "ObsNormalizer":
        out = cls(len(d["mean"]), d["clip"], d["eps"])
        out.mean = np.array(d["mean"], dtype=np.float64)
        out.var = np.array(d["var"], dtype=np.float64)
        out.count = float(d["count"])
        return out


class NormalizedVecEnv:
    """Wraps :class:`HoverVecEnv` so the agent sees normalized observations.

    Statistics are updated from every raw observation the wrapper returns
    while ``training`` is set.
    """

    def __init__(self, envs: HoverVecEnv, normalizer: ObsNormalizer | None = None, training: bool = True):
        self.envs = envs
        self.normalizer = normalizer or ObsNormalizer()
        self.training = training

    def __getattr__(self, name):
        return getattr(self.envs, name)

    def _norm(self, obs):
        if self.training:
            self.normalizer.update(obs)
        return self.normalizer(obs)

    def reset(self, global_timestep: int | None = None) -> np.ndarray:
        return self._norm(self.envs.reset(global_timestep))

    def step(self, actions):
        obs, reward, done, info = self.envs.step(actions)
        if "terminal_obs" in info:
            info["terminal_obs"] = self.normalizer(info["terminal_obs"])
        return self._norm(obs), reward, done, info

    def get_state(self) -> dict:
        return {**self.envs.get_state(), "obs_norm": self.normalizer.to_dict()}

    def set_state(self, st: dict):
        self.envs.set_state(st)
        self.normalizer = ObsNormalizer.from_dict(st["obs_norm"])


def make_vec_env(cfg: EnvConfig, n_envs: int = 1, seed: int = 0):
    envs = HoverVecEnv(cfg, n_envs, seed)
    return NormalizedVecEnv(envs) if cfg.episode.normalize_obs else envs


def _step_unchecked(state, motors, a, d, cfg: EnvConfig):
    """Per-env fallback after a batched step diverged: keep finite rows, NaN the rest."""
    n = a.shape[0]
    out = RobotState(state.p.copy(), state.v.copy(), state.R.copy(), state.omega.copy())
    mot = motors.actual.copy()
    for i in range(n):
        s_i = RobotState(state.p[i], state.v[i], state.R[i], state.omega[i])
        try:
            new, m = step_motors(s_i, MotorState(motors.actual[i]), action_to_motor(a[i], cfg.robot),
                                 d[i], cfg.episode.dt, cfg.robot)
        except SimulationDiverged:
            out.p[i] = np.nan
            continue
        out.p[i], out.v[i], out.R[i], out.omega[i] = new.p, new.v, new.R, new.omega
        mot[i] = m.actual
    return out, MotorState(mot)


class HoverEnv:
    """Single hover environment with explicit seeding.

    ``reset(seed, global_timestep)`` places the vehicle uniformly in the
    initial cube with hover motor thrust; the wind speed follows the
    schedule at ``global_timestep``.
    """

    def __init__(self, cfg: EnvConfig | None = None):
        self.cfg = cfg or EnvConfig()
        self._vec = HoverVecEnv(self.cfg, 1, 0)

    @property
    def state(self) -> RobotState:
        s = self._vec.state
        return RobotState(s.p[0], s.v[0], s.R[0], s.omega[0])

    @property
    def wind_speed(self) -> float:
        return float(self._vec.wind_speed[0])

    def set_state(self, state: RobotState):
        s = self._vec.state
        s.p[0], s.v[0], s.R[0], s.omega[0] = state.p, state.v, state.R, state.omega

    def reset(self, seed: int | None = None, global_timestep: int = 0) -> np.ndarray:
        if seed is not None:
            self._vec.rngs = [np.random.default_rng(seed)]
            self._vec.seed = seed
        return self._vec.reset(global_timestep)[0]

    def step(self, action: np.ndarray):
        obs, reward, done, info = self._vec.step(np.asarray(action)[None, :])
        obs = obs[0]
        out = {k: v[0] for k, v in info.items() if k in ("crashed", "terminated", "truncated")}
        out = {k: bool(v) for k, v in out.items()}
        if done[0]:
            # report the state the episode ended in, not the auto-reset one
            obs = info["terminal_obs"][0]
            out["episode_return"] = float(info["episode_returns"][0])
        return obs, float(reward[0]), bool(done[0]), out

