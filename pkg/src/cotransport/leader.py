"""PID goal-seeking controller for the leader drone."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import GRAVITY, SystemParams, SystemState, attachment_velocity, rotation_matrix
from .inner_control import ActionBounds, ControlAction


def _gain(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(3)
    if np.any(arr < 0):
        raise ValueError("PID gains must be non-negative")
    return arr


@dataclass(frozen=True)
class PidGains:
    kp: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.5]))
    kd: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))
    ki: np.ndarray = field(default_factory=lambda: np.zeros(3))
    integral_limit: float = 2.0  # m s

    def __post_init__(self):
        for name in ("kp", "kd", "ki"):
            object.__setattr__(self, name, _gain(getattr(self, name)))
        if self.integral_limit <= 0:
            raise ValueError("integral_limit must be positive")

    @classmethod
    def simulation(cls) -> "PidGains":
        return cls()

    @classmethod
    def experiment(cls) -> "PidGains":
        """Gains used on the Crazyflie test stand."""
        return cls(kp=[1.0, 1.0, 0.1], kd=[2.0, 2.0, 5.0], ki=[0.2, 0.1, 0.1])


@dataclass(frozen=True)
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_time: float = 0.0


def pid_desired_accel(e, e_dot, pid: PidState, gains: PidGains, dt: float) -> tuple[np.ndarray, PidState]:
    """``kp e + kd e_dot + ki int(e)``, advancing and clamping the integral first."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    e = np.asarray(e, dtype=float)
    e_dot = np.asarray(e_dot, dtype=float)
    integral = np.clip(pid.integral + e * dt, -gains.integral_limit, gains.integral_limit)
    accel = gains.kp * e + gains.kd * e_dot + gains.ki * integral
    return accel, PidState(integral, pid.prev_time + dt)


def accel_to_attitude(accel_d, psi_d: float = 0.0, bound: float | None = 0.35, gravity: float = GRAVITY) -> tuple[float, float]:
    """Small-angle inversion of a desired horizontal acceleration.

    ``bound=None`` returns the raw values.
    """
    ax, ay = float(accel_d[0]), float(accel_d[1])
    s, c = np.sin(psi_d), np.cos(psi_d)
    phi = (ax * s - ay * c) / gravity
    theta = (ax * c + ay * s) / gravity
    if bound is not None:
        phi = float(np.clip(phi, -bound, bound))
        theta = float(np.clip(theta, -bound, bound))
    return phi, theta


def leader_action(
    state: SystemState,
    goal,
    pid: PidState,
    gains: PidGains,
    dt: float,
    *,
    params: SystemParams | None = None,
    track: str = "object",
    bounds: ActionBounds = ActionBounds(),
    pitch_locked: bool = False,
) -> tuple[ControlAction, PidState]:
    """Leader command from the position error of the object (or of the leader).

    ``track="leader"`` uses the leader drone's own position and needs ``params``
    for the attachment geometry.
    """
    goal = np.asarray(goal, dtype=float)
    if track == "object":
        e = goal - state.p_o
        e_dot = -state.v_o
    elif track == "leader":
        if params is None:
            raise ValueError("tracking the leader needs the system params")
        offset = params.obj.attach_leader
        p_l = state.p_o + rotation_matrix(state.eta) @ offset
        e = goal - p_l
        e_dot = -attachment_velocity(state, offset)
    else:
        raise ValueError(f"unknown tracking target {track!r}")

    accel, pid = pid_desired_accel(e, e_dot, pid, gains, dt)
    psi_d = 0.0
    phi, theta = accel_to_attitude(accel, psi_d, bound=bounds.angle, gravity=GRAVITY if params is None else params.gravity)
    if pitch_locked:
        theta = 0.0
    action = bounds.clamp(ControlAction(phi, theta, float(accel[2]), psi_d))
    return action, pid


def reset_pid() -> PidState:
    return PidState()

