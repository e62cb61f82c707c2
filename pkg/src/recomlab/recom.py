"""Retrospective cost learning-rate scheduler.

Per-episode returns ``R`` and per-iteration PPO losses ``L`` are kept on a
common episode index: every episode finished during an iteration is paired
with that iteration's mean total loss. At each update boundary the windowed
cost ``mean(-R + L)`` over the last ``T`` entries is compared with the same
window shifted back one entry, and the learning rate moves against the
change::

    lr <- clamp(lr - gain * (C_ret - C_prev), lr_min, lr_max)

A rising cost lowers the learning rate; a falling cost raises it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class InsufficientHistory(ValueError):
    pass


WINDOW_MODES = ("shifted", "disjoint")


def _window_cost(rewards, losses, start: int, stop: int) -> float:
    r = np.asarray(rewards[start:stop], dtype=np.float64)
    l = np.asarray(losses[start:stop], dtype=np.float64)
    return float(np.mean(-r + l))


def retrospective_cost(rewards, losses, T: int) -> float:
    """Mean of ``-R + L`` over the last ``T`` entries."""
    n = min(len(rewards), len(losses))
    if T < 1 or n < T:
        raise InsufficientHistory(f"need {T} entries, have {n}")
    return _window_cost(rewards, losses, n - T, n)


def previous_cost(rewards, losses, T: int, mode: str = "shifted") -> float:
    """Cost of the preceding window.

    ``shifted`` moves the window back by one entry; ``disjoint`` uses the
    ``T`` entries immediately before the current window.
    """
    n = min(len(rewards), len(losses))
    if mode not in WINDOW_MODES:
        raise ValueError(f"unknown window mode {mode!r}")
    back = 1 if mode == "shifted" else T
    if T < 1 or n < T + back:
        raise InsufficientHistory(f"need {T + back} entries, have {n}")
    return _window_cost(rewards, losses, n - T - back, n - back)


def cost_gradient(c_ret: float, c_prev: float) -> float:
    return c_ret - c_prev


@dataclass
class RecomConfig:
    window: int = 10
    gain: float = 5e-6
    update_period: int = 40_000
    lr_init: float = 3e-4
    lr_min: float = 1e-6
    lr_max: float = 1e-2
    window_mode: str = "shifted"

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.update_period <= 0:
            raise ValueError("update_period must be positive")
        if not self.lr_min <= self.lr_init <= self.lr_max:
            raise ValueError("lr_init must lie inside [lr_min, lr_max]")
        if self.window_mode not in WINDOW_MODES:
            raise ValueError(f"window_mode must be one of {WINDOW_MODES}")


RECOM_LOG_FIELDS = ("global_step", "C_ret", "C_prev", "G_cost", "lr_before", "lr_after", "clamped")


@dataclass
class RecomState:
    cfg: RecomConfig = field(default_factory=RecomConfig)
    rewards: list[float] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    lr: float = float("nan")
    last_boundary: int = 0
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if np.isnan(self.lr):
            self.lr = self.cfg.lr_init

    def record(self, episode_returns, loss: float):
        """Append finished-episode returns, each tagged with ``loss``."""
        if not np.isfinite(loss):
            raise ValueError("loss must be finite")
        for r in episode_returns:
            if not np.isfinite(r):
                raise ValueError("episode return must be finite")
            self.rewards.append(float(r))
            self.losses.append(float(loss))

    def update_lr(self, global_step: int) -> bool:
        """Apply the learning-rate update if a period boundary was crossed.

        Returns whether the learning rate was recomputed.
        """
        boundary = int(global_step) // self.cfg.update_period
        if boundary <= self.last_boundary:
            return False
        self.last_boundary = boundary
        T = self.cfg.window
        try:
            c_ret = retrospective_cost(self.rewards, self.losses, T)
            c_prev = previous_cost(self.rewards, self.losses, T, self.cfg.window_mode)
        except InsufficientHistory as exc:
            logger.info("RECOM skip at step %d: %s", global_step, exc)
            return False
        g = cost_gradient(c_ret, c_prev)
        before = self.lr
        proposed = before - self.cfg.gain * g
        self.lr = float(min(max(proposed, self.cfg.lr_min), self.cfg.lr_max))
        clamped = self.lr != proposed
        if clamped:
            logger.info("RECOM clamp at step %d: %.3g -> %.3g", global_step, proposed, self.lr)
        self.log.append(dict(zip(RECOM_LOG_FIELDS, (int(global_step), c_ret, c_prev, g, before, self.lr, clamped))))
        return True

    def to_dict(self) -> dict:
        return {
            "rewards": list(self.rewards),
            "losses": list(self.losses),
            "lr": self.lr,
            "last_boundary": self.last_boundary,
            "log": list(self.log),
        }

    @classmethod
    def from_dict(cls, cfg: RecomConfig, d: dict) -> "RecomState":
        return cls(cfg, list(d["rewards"]), list(d["losses"]), float(d["lr"]),
                   int(d["last_boundary"]), list(d["log"]))
