"""Per-drone attitude loop and rotor allocation.

A ``ControlAction`` (desired roll, pitch, vertical acceleration, yaw) becomes a
collective thrust plus body torques through a PD attitude law, and the mixer
turns that wrench into four rotor forces.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import GRAVITY, DroneParams, SystemState

log = logging.getLogger(__name__)

# clamp changes larger than this count as an infeasible request
MIX_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ActionBounds:
    angle: float = 0.35  # rad, for phi_d and theta_d
    accel: float = 5.0  # m/s^2, for az_d

    @property
    def scale(self) -> np.ndarray:
        """Half-widths of ``(phi_d, theta_d, az_d)``."""
        return np.array([self.angle, self.angle, self.accel])

    def clamp(self, action: "ControlAction") -> "ControlAction":
        return ControlAction(
            float(np.clip(action.phi_d, -self.angle, self.angle)),
            float(np.clip(action.theta_d, -self.angle, self.angle)),
            float(np.clip(action.az_d, -self.accel, self.accel)),
            action.psi_d,
        )

    def contains(self, action: "ControlAction", tol: float = 1e-12) -> bool:
        return (
            abs(action.phi_d) <= self.angle + tol
            and abs(action.theta_d) <= self.angle + tol
            and abs(action.az_d) <= self.accel + tol
        )


@dataclass(frozen=True)
class ControlAction:
    phi_d: float = 0.0
    theta_d: float = 0.0
    az_d: float = 0.0
    psi_d: float = 0.0

    def as_array(self) -> np.ndarray:
        """``(phi_d, theta_d, az_d)``; yaw is not part of the learned action."""
        return np.array([self.phi_d, self.theta_d, self.az_d])

    @classmethod
    def from_array(cls, values, psi_d: float = 0.0) -> "ControlAction":
        phi, theta, az = (float(v) for v in np.asarray(values, dtype=float).reshape(3))
        return cls(phi, theta, az, psi_d)


@dataclass(frozen=True)
class RotorCommand:
    forces: np.ndarray
    # True when the requested wrench had to be clipped to the force limits
    saturated: bool = False


@dataclass(frozen=True)
class AttitudeGains:
    kp: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N m / rad
    kd: np.ndarray = field(default_factory=lambda: np.zeros(3))  # N m s / rad

    @classmethod
    def for_inertia(cls, inertia, kp_scale: float = 900.0, kd_scale: float = 42.0) -> "AttitudeGains":
        """Gains proportional to the (diagonal of the) inertia this drone must turn.

        With the share of inertia each drone carries, the closed loop per axis is
        ``theta'' + kd_scale theta' + kp_scale theta = kp_scale theta_d``.
        """
        diag = np.diag(np.asarray(inertia, dtype=float)) if np.ndim(inertia) == 2 else np.asarray(inertia, float)
        return cls(kp_scale * diag, kd_scale * diag)


def mixer_matrix(drone: DroneParams) -> np.ndarray:
    """Map rotor forces ``F1..F4`` to ``(thrust, tau_x, tau_y, tau_z)``."""
    L, c = drone.arm_length, drone.rotor_moment_coeff
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [0.0, L, 0.0, -L],
            [-L, 0.0, L, 0.0],
            [c, -c, c, -c],
        ]
    )


def _unmix(thrust: float, torques: np.ndarray, drone: DroneParams) -> np.ndarray:
    L, c = drone.arm_length, drone.rotor_moment_coeff
    tx, ty, tz = torques
    base = thrust / 4.0
    return np.array(
        [
            base - ty / (2 * L) + tz / (4 * c),
            base + tx / (2 * L) - tz / (4 * c),
            base + ty / (2 * L) + tz / (4 * c),
            base - tx / (2 * L) - tz / (4 * c),
        ]
    )


def recompose(forces, drone: DroneParams) -> tuple[float, np.ndarray]:
    wrench = mixer_matrix(drone) @ np.asarray(forces, dtype=float)
    return float(wrench[0]), wrench[1:]


def mix(thrust: float, torques, drone: DroneParams) -> RotorCommand:
    """Exact inverse of :func:`mixer_matrix`, then clipped to the rotor limits."""
    forces = _unmix(float(thrust), np.asarray(torques, dtype=float), drone)
    lo, hi = drone.rotor_force_limits
    clipped = np.clip(forces, lo, hi)
    saturated = bool(np.max(np.abs(clipped - forces)) > MIX_TOLERANCE)
    if saturated:
        log.debug("mixer clipped infeasible wrench thrust=%.4f torques=%s", thrust, torques)
    return RotorCommand(clipped, saturated)


def saturate_wrench(thrust: float, torques: np.ndarray, drone: DroneParams) -> tuple[float, np.ndarray]:
    """Keep the collective thrust, shrink the torques until every rotor fits."""
    lo, hi = drone.rotor_force_limits
    thrust = float(np.clip(thrust, 4 * lo, 4 * hi))
    base = thrust / 4.0
    delta = _unmix(0.0, torques, drone)
    scale = 1.0
    for d in delta:
        if d > 0 and base + d > hi:
            scale = min(scale, (hi - base) / d)
        elif d < 0 and base + d < lo:
            scale = min(scale, (lo - base) / d)
    if scale < 1.0:
        log.debug("attitude torques scaled by %.3f to stay within rotor limits", scale)
    return thrust, torques * max(scale, 0.0)


def attitude_control(
    state: SystemState,
    action: ControlAction,
    params: DroneParams,
    mass_share: float,
    gains: AttitudeGains,
    gravity: float = GRAVITY,
) -> tuple[float, np.ndarray]:
    """PD attitude law: returns ``(collective thrust, body torques)``.

    Thrust is ``mass_share * (g + az_d)``; torques are
    ``kp * (eta_d - eta) - kd * omega`` per axis, scaled down if the mixer could
    not realise them.
    """
    eta_d = np.array([action.phi_d, action.theta_d, action.psi_d])
    thrust = mass_share * (gravity + action.az_d)
    torques = gains.kp * (eta_d - state.eta) - gains.kd * state.omega
    return saturate_wrench(thrust, torques, params)
