"""Rigid-body quadrotor model with first-order motor lag and wind drag.

State blocks broadcast over leading batch dimensions, so the same functions
step a single vehicle (``p.shape == (3,)``) or a batch (``p.shape == (n, 3)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


class SimulationDiverged(RuntimeError):
    """Raised when integration produces non-finite state."""


@dataclass(frozen=True)
class RobotParams:
    """Crazyflie-class physical parameters."""

    mass: float = 0.03
    inertia: tuple[float, float, float] = (1.43e-5, 1.43e-5, 2.89e-5)
    arm_length: float = 0.043
    thrust_to_weight: float = 1.95
    max_thrust: float = 0.575
    motor_time_constant: float = 0.05
    g: float = 9.81
    # N*m of yaw torque per N of rotor thrust
    yaw_coefficient: float = 0.005
    # N*s/m, linear drag against the relative air velocity
    drag_coefficient: float = 0.01

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if min(self.inertia) <= 0:
            raise ValueError("inertia components must be positive")
        if self.max_thrust <= self.mass * self.g:
            raise ValueError(
                f"max_thrust {self.max_thrust} N cannot lift {self.mass * self.g:.4f} N"
            )
        if self.motor_time_constant <= 0:
            raise ValueError("motor_time_constant must be positive")

    @property
    def J(self) -> Array:
        return np.asarray(self.inertia, dtype=np.float64)

    @property
    def motor_max(self) -> float:
        return self.max_thrust / 4.0

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.g

    @property
    def tau_max(self) -> Array:
        roll_pitch = self.arm_length * self.motor_max
        return np.array([roll_pitch, roll_pitch, 2.0 * self.yaw_coefficient * self.motor_max])


@dataclass
class RobotState:
    p: Array
    v: Array
    R: Array
    omega: Array

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0)) -> "RobotState":
        return cls(
            p=np.array(position, dtype=np.float64),
            v=np.zeros(3),
            R=np.eye(3),
            omega=np.zeros(3),
        )

    def copy(self) -> "RobotState":
        return RobotState(self.p.copy(), self.v.copy(), self.R.copy(), self.omega.copy())

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.p))
            and np.all(np.isfinite(self.v))
            and np.all(np.isfinite(self.R))
            and np.all(np.isfinite(self.omega))
        )


@dataclass
class WrenchCommand:
    """Body-frame thrust vector ``f = [0, 0, f_z]`` and torque ``tau``."""

    f: Array
    tau: Array = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def thrust(cls, f_z: float, tau=(0.0, 0.0, 0.0)) -> "WrenchCommand":
        return cls(np.array([0.0, 0.0, f_z]), np.asarray(tau, dtype=np.float64))


@dataclass
class MotorState:
    actual: Array  # per-motor thrust, N

    @classmethod
    def hover(cls, params: RobotParams) -> "MotorState":
        return cls(np.full(4, params.hover_thrust / 4.0))


def skew(w: Array) -> Array:
    """Matrix ``S(w)`` with ``S(w) @ x == cross(w, x)``."""
    w = np.asarray(w, dtype=np.float64)
    S = np.zeros(w.shape[:-1] + (3, 3))
    S[..., 0, 1] = -w[..., 2]
    S[..., 0, 2] = w[..., 1]
    S[..., 1, 0] = w[..., 2]
    S[..., 1, 2] = -w[..., 0]
    S[..., 2, 0] = -w[..., 1]
    S[..., 2, 1] = w[..., 0]
    return S


def mixer_matrix(params: RobotParams) -> Array:
    """Map per-motor thrusts to ``[f_z, tau_x, tau_y, tau_z]``.

    X layout: motors at 45, 135, 225, 315 degrees, alternating spin.
    """
    d = params.arm_length / np.sqrt(2.0)
    k = params.yaw_coefficient
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [d, d, -d, -d],
            [-d, d, d, -d],
            [k, -k, k, -k],
        ]
    )


def motors_to_wrench(thrusts: Array, params: RobotParams) -> tuple[Array, Array]:
    out = thrusts @ mixer_matrix(params).T
    f = np.zeros(out.shape[:-1] + (3,))
    f[..., 2] = out[..., 0]
    return f, out[..., 1:]


def wrench_to_motors(cmd: WrenchCommand, params: RobotParams) -> Array:
    """Inverse mixer with thrust and torque limits applied."""
    f_z = np.clip(cmd.f[..., 2], 0.0, params.max_thrust)
    tau = np.clip(cmd.tau, -params.tau_max, params.tau_max)
    target = np.concatenate([np.asarray(f_z)[..., None], tau], axis=-1)
    thrusts = target @ np.linalg.inv(mixer_matrix(params)).T
    return np.clip(thrusts, 0.0, params.motor_max)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input to dynamics")


def derivative(s: RobotState, cmd: WrenchCommand, d: Array, params: RobotParams):
    """Time derivative of ``(p, v, R, omega)``.

    ``d`` is the body-frame disturbance force; it is rotated together with
    the thrust. Returns a tuple ``(p_dot, v_dot, R_dot, omega_dot)``.
    """
    _check_finite(s.p, s.v, s.R, s.omega, cmd.f, cmd.tau, d)
    return _derivative(s.v, s.R, s.omega, cmd.f, cmd.tau, d, params)


def _derivative(v, R, omega, f, tau, d, params: RobotParams):
    J = params.J
    force_body = f + d
    v_dot = np.einsum("...ij,...j->...i", R, force_body) / params.mass
    v_dot[..., 2] -= params.g
    R_dot = R @ skew(omega)
    omega_dot = (tau - _cross(omega, J * omega)) / J
    return v, v_dot, R_dot, omega_dot


def _cross(a: Array, b: Array) -> Array:
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def orthonormalize(R: Array) -> Array:
    """Gram-Schmidt on the columns of ``R``."""
    c0 = R[..., :, 0]
    c0 = c0 / np.linalg.norm(c0, axis=-1, keepdims=True)
    c1 = R[..., :, 1]
    c1 = c1 - np.sum(c0 * c1, axis=-1, keepdims=True) * c0
    c1 = c1 / np.linalg.norm(c1, axis=-1, keepdims=True)
    c2 = _cross(c0, c1)
    return np.stack([c0, c1, c2], axis=-1)


def step_motors(
    s: RobotState,
    m: MotorState,
    motor_cmd: Array,
    disturbance: Array,
    dt: float,
    params: RobotParams,
) -> tuple[RobotState, MotorState]:
    """One RK4 step with per-motor thrust commands.

    Motor thrusts relax toward ``motor_cmd`` with the motor time constant and
    are part of the integrated state. ``disturbance`` is the body-frame
    force, held constant over the step.
    """
    if not 0.0 < dt <= 0.05:
        raise ValueError(f"dt must lie in (0, 0.05], got {dt}")
    cmd = np.clip(motor_cmd, 0.0, params.motor_max)
    tm = params.motor_time_constant

    def f(p, v, R, omega, u):
        force, tau = motors_to_wrench(u, params)
        p_dot, v_dot, R_dot, w_dot = _derivative(v, R, omega, force, tau, disturbance, params)
        return p_dot, v_dot, R_dot, w_dot, (cmd - u) / tm

    y0 = (s.p, s.v, s.R, s.omega, m.actual)
    k1 = f(*y0)
    k2 = f(*(y + 0.5 * dt * k for y, k in zip(y0, k1)))
    k3 = f(*(y + 0.5 * dt * k for y, k in zip(y0, k2)))
    k4 = f(*(y + dt * k for y, k in zip(y0, k3)))
    p, v, R, omega, u = (
        y + dt / 6.0 * (a + 2.0 * b + 2.0 * c + e)
        for y, a, b, c, e in zip(y0, k1, k2, k3, k4)
    )
    new = RobotState(p, v, orthonormalize(R), omega)
    if not new.is_finite():
        raise SimulationDiverged("non-finite state after RK4 step")
    return new, MotorState(np.clip(u, 0.0, params.motor_max))


def step(
    s: RobotState,
    m: MotorState,
    cmd: WrenchCommand,
    wind: Array,
    dt: float,
    params: RobotParams,
) -> tuple[RobotState, MotorState]:
    """Advance one step under a wrench command and a body-frame disturbance."""
    return step_motors(s, m, wrench_to_motors(cmd, params), wind, dt, params)


def wind_force(
    wind_speed: float,
    direction: Array,
    state: RobotState,
    params: RobotParams,
) -> Array:
    """Body-frame drag force from a uniform wind field.

    ``d = R^T c_d (w - v)`` with ``w = wind_speed * direction``.
    """
    if np.any(np.asarray(wind_speed) < 0):
        raise ValueError("wind_speed must be non-negative")
    w = np.asarray(wind_speed, dtype=np.float64)[..., None] * np.asarray(direction, dtype=np.float64)
    rel = params.drag_coefficient * (w - state.v)
    return np.einsum("...ji,...j->...i", state.R, rel)
