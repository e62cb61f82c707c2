"""Hover evaluation: success rate and per-axis position MSE."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from recomlab import checkpoint, nn
from recomlab.config import EvalConfig, ExperimentConfig, from_dict
from recomlab.dynamics import RobotParams, mixer_matrix
from recomlab.env import EnvConfig, HoverEnv, ObsNormalizer, WindSchedule, rotation_zyx

Policy = Callable[[np.ndarray], np.ndarray]

TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw",
                      "p", "q", "r", "a0", "a1", "a2", "a3", "reward")


@dataclass
class EvalSummary:
    n_episodes: int
    success_rate: float
    mse_x: float
    mse_y: float
    mse_z: float
    success_radius: float
    final_window: float
    mse_mode: str
    wind_speed: float
    final_positions: list[list[float]] = field(default_factory=list)
    successes: list[bool] = field(default_factory=list)
    # per-episode (steps, 18) arrays: t, obs(12), clipped action(4), reward
    trajectories: list[np.ndarray] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("trajectories")
        return d

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_trajectories(self, path):
        """All episodes in one CSV with a leading ``episode`` column."""
        header = ["episode"] + list(TRAJECTORY_COLUMNS)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i, traj in enumerate(self.trajectories):
                for row in traj:
                    w.writerow([i] + [repr(float(x)) for x in row])


def mlp_policy(params: nn.Params, normalizer: ObsNormalizer | None = None) -> Policy:
    """Deterministic policy: the Gaussian mean, on normalized inputs if given."""

    def act(obs):
        if normalizer is not None:
            obs = normalizer(obs)
        mean, _ = nn.forward_policy(params, obs[None, :])
        return mean[0]

    return act


class HoverOracle:
    """Scripted geometric controller with exact wind feed-forward.

    Uses the observation plus knowledge of the wind field to command per-motor
    thrusts; it is a reference for validating the evaluation harness, not a
    learned policy.
    """

    def __init__(self, params: RobotParams, wind_velocity=(0.0, 0.0, 0.0),
                 kp=4.0, kd=3.6, att_freq=15.0, att_damping=0.8, max_lateral_acc=6.0):
        self.params = params
        self.wind = np.asarray(wind_velocity, dtype=np.float64)
        self.kp, self.kd = kp, kd
        J = params.J
        self.kR = J * att_freq**2
        self.kw = J * 2.0 * att_damping * att_freq
        self.max_lateral_acc = max_lateral_acc
        self.mix_inv = np.linalg.inv(mixer_matrix(params))

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        P = self.params
        p, v, euler, omega = obs[0:3], obs[3:6], obs[6:9], obs[9:12]
        R = rotation_zyx(euler)
        drag_world = P.drag_coefficient * (self.wind - v)
        acc = -self.kp * p - self.kd * v
        lateral = np.linalg.norm(acc[:2])
        if lateral > self.max_lateral_acc:
            acc[:2] *= self.max_lateral_acc / lateral
        force = P.mass * (acc + np.array([0.0, 0.0, P.g])) - drag_world
        b3d = force / np.linalg.norm(force)
        b1c = np.array([1.0, 0.0, 0.0])
        b2d = np.cross(b3d, b1c)
        b2d /= np.linalg.norm(b2d)
        Rd = np.column_stack([np.cross(b2d, b3d), b2d, b3d])
        E = 0.5 * (Rd.T @ R - R.T @ Rd)
        e_R = np.array([E[2, 1], E[0, 2], E[1, 0]])
        J = P.J
        tau = -self.kR * e_R - self.kw * omega + np.cross(omega, J * omega)
        f_z = float(force @ R[:, 2])
        thrusts = self.mix_inv @ np.concatenate([[f_z], tau])
        thrusts = np.clip(thrusts, 0.0, P.motor_max)
        return 2.0 * thrusts / P.motor_max - 1.0


def evaluate_policy(policy: Policy, env_cfg: EnvConfig, ecfg: EvalConfig) -> EvalSummary:
    """Roll out ``ecfg.n_episodes`` seeded episodes at a fixed wind speed."""
    episode = env_cfg.episode
    env_cfg = replace(
        env_cfg,
        schedule=WindSchedule(1, (ecfg.wind_speed,), env_cfg.schedule.direction),
        episode=replace(episode, init_position_range=ecfg.init_range),
        wind_enabled=True,
    )
    env = HoverEnv(env_cfg)
    window = max(1, int(round(ecfg.final_window / episode.dt)))
    target = np.asarray(episode.target)
    sq_err, finals, successes, trajectories = [], [], [], []
    seeds = np.random.SeedSequence(ecfg.seed).generate_state(ecfg.n_episodes)
    for seed in seeds:
        obs = env.reset(seed=int(seed))
        positions = [env.state.p.copy()]
        rows = []
        done = False
        info = {}
        while not done:
            action = np.clip(policy(obs), -1.0, 1.0)
            obs, reward, done, info = env.step(action)
            positions.append(obs[0:3] + target)
            rows.append(np.concatenate([[len(rows) * episode.dt + episode.dt], obs, action, [reward]]))
        trajectories.append(np.asarray(rows))
        traj = np.asarray(positions)
        traj = traj[np.all(np.isfinite(traj), axis=1)]
        err = traj - target
        tail = err[-window:]
        full_length = not (info.get("terminated") or info.get("crashed"))
        ok = full_length and bool(np.all(np.linalg.norm(tail, axis=1) <= ecfg.success_radius))
        successes.append(ok)
        finals.append(traj[-1].tolist())
        sq_err.append(np.mean((tail if ecfg.mse_mode == "final" else err) ** 2, axis=0))
    mse = np.mean(sq_err, axis=0)
    return EvalSummary(
        n_episodes=ecfg.n_episodes,
        success_rate=100.0 * float(np.mean(successes)),
        mse_x=float(mse[0]),
        mse_y=float(mse[1]),
        mse_z=float(mse[2]),
        success_radius=ecfg.success_radius,
        final_window=ecfg.final_window,
        mse_mode=ecfg.mse_mode,
        wind_speed=ecfg.wind_speed,
        final_positions=finals,
        successes=successes,
        trajectories=trajectories,
    )


def run_evaluation(checkpoint_path, n_episodes: int | None = None, wind_speed: float | None = None,
                   init_range: float | None = None, policy: Policy | None = None) -> EvalSummary:
    """Evaluate the deterministic policy stored in a training checkpoint.

    Unset arguments fall back to the ``[eval]`` section saved with the run.
    ``policy`` replaces the checkpoint's network (e.g. with ``HoverOracle``).
    """
    data = checkpoint.load(checkpoint_path)
    cfg: ExperimentConfig = from_dict(data["config"])
    params = checkpoint.decode_params(data["params"])
    checkpoint.check_architecture(params)
    changes = {k: v for k, v in
               dict(n_episodes=n_episodes, wind_speed=wind_speed, init_range=init_range).items()
               if v is not None}
    ecfg = replace(cfg.eval, **changes)
    norm = data.get("envs", {}).get("obs_norm")
    normalizer = ObsNormalizer.from_dict(norm) if norm is not None else None
    return evaluate_policy(policy or mlp_policy(params, normalizer), cfg.env_config(), ecfg)
