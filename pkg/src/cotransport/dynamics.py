"""Rigid leader/follower/object system with a moving center of gravity.

The two drones are rigidly bolted to the object, so the whole assembly is
integrated as a single rigid body referenced at the object's geometric
center.  Drone positions are always derived from that pose.  The contact
wrenches each drone transmits to the object are recovered afterwards from the
per-drone equations of motion (see :func:`interaction_wrench`).

Conventions
-----------
* World frame is Z-up, gravity along ``-z``.
* Attitude ``eta = (phi, theta, psi)`` (roll, pitch, yaw); the body-to-world
  rotation is ``Rz(psi) @ Rx(phi) @ Ry(theta)``.
* Angular rates are identified with Euler-angle rates (small-angle model), and
  are used as the body angular velocity in the rotational equations.
* Rotor ``i`` of a drone contributes ``[L (F2 - F4), L (F3 - F1),
  c_M (F1 - F2 + F3 - F4)]`` to the body torque.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81

Z_HAT = np.array([0.0, 0.0, 1.0])

# Generalized coordinates, in the order used by ``locked_dofs``.
DOF_NAMES = ("x", "y", "z", "roll", "pitch", "yaw")


class DivergenceError(RuntimeError):
    """Raised when an integrated state leaves the configured magnitude bound."""


def _vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {arr.shape}")
    return arr


def _inertia(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3 (or its diagonal), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class DroneParams:
    mass: float = 1.0
    inertia: np.ndarray = field(default_factory=lambda: 8e-3 * np.diag([1.0, 1.0, 2.0]))
    arm_length: float = 0.12
    # M_i / F_i, in meters
    rotor_moment_coeff: float = 0.02
    rotor_force_limits: tuple[float, float] = (0.0, 8.0)

    def __post_init__(self):
        object.__setattr__(self, "inertia", _inertia(self.inertia, "inertia"))
        lo, hi = (float(v) for v in self.rotor_force_limits)
        object.__setattr__(self, "rotor_force_limits", (lo, hi))
        if self.mass <= 0:
            raise ValueError("drone mass must be positive")
        if np.any(np.diag(self.inertia) <= 0):
            raise ValueError("drone inertia diagonal must be positive")
        if self.arm_length <= 0:
            raise ValueError("arm_length must be positive")
        if self.rotor_moment_coeff <= 0:
            raise ValueError("rotor_moment_coeff must be positive")
        if not 0.0 <= lo < hi:
            raise ValueError(f"rotor force limits must satisfy 0 <= min < max, got {(lo, hi)}")


@dataclass(frozen=True)
class ObjectParams:
    """Carried object (a rod by default) and where the drones attach to it.

    ``inertia=None`` selects the slender-rod value ``m len^2 / 12`` about the
    two axes normal to the rod, plus a small axial term.
    """

    mass: float = 0.2
    length: float = 0.34
    inertia: np.ndarray | None = None
    attach_leader: np.ndarray | None = None
    attach_follower: np.ndarray | None = None
    # unit vector along the rod, body frame
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        axis = _vec3(self.axis, "axis")
        if not np.isclose(np.linalg.norm(axis), 1.0):
            raise ValueError("rod axis must be a unit vector")
        object.__setattr__(self, "axis", axis)
        half = self.length / 2.0
        if self.attach_leader is None:
            object.__setattr__(self, "attach_leader", half * axis)
        if self.attach_follower is None:
            object.__setattr__(self, "attach_follower", -half * axis)
        object.__setattr__(self, "attach_leader", _vec3(self.attach_leader, "attach_leader"))
        object.__setattr__(self, "attach_follower", _vec3(self.attach_follower, "attach_follower"))
        if self.inertia is None:
            rod = self.mass * self.length**2 / 12.0
            axial = self.mass * 1e-4 / 2.0  # 1 cm radius
            inertia = rod * (np.eye(3) - np.outer(axis, axis)) + axial * np.outer(axis, axis)
            object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "inertia", _inertia(self.inertia, "object inertia"))

        if self.mass < 0:
            raise ValueError("object mass must be non-negative")
        if self.length <= 0:
            raise ValueError("object length must be positive")
        tol = 1e-12
        for name in ("attach_leader", "attach_follower"):
            if np.linalg.norm(getattr(self, name)) > half + tol:
                raise ValueError(f"{name} lies beyond the object's half-length")
        if np.allclose(self.attach_leader, self.attach_follower):
            raise ValueError("leader and follower cannot share an attachment point")


@dataclass(frozen=True)
class CgTrajectory:
    """Sinusoidal excursion of the object's CG along a body axis."""

    amplitude: float = 0.4 * 0.34 / 2.0
    angular_frequency: float = 0.31
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))

    def __post_init__(self):
        axis = _vec3(self.axis, "axis")
        if not np.isclose(np.linalg.norm(axis), 1.0):
            raise ValueError("CG axis must be a unit vector")
        object.__setattr__(self, "axis", axis)
        if self.amplitude < 0:
            raise ValueError("CG amplitude must be non-negative")
        if self.angular_frequency < 0:
            raise ValueError("CG angular frequency must be non-negative")

    def check_fits(self, obj: ObjectParams):
        if self.amplitude > obj.length / 2.0 + 1e-12:
            raise ValueError("CG amplitude exceeds the object's half-length")


@dataclass(frozen=True)
class SystemParams:
    leader: DroneParams = field(default_factory=DroneParams)
    follower: DroneParams = field(default_factory=DroneParams)
    obj: ObjectParams = field(default_factory=ObjectParams)
    gravity: float = GRAVITY
    # any |state component| above this is treated as numerical divergence
    divergence_bound: float = 1e4
    # subset of DOF_NAMES held fixed (test-stand rigs)
    locked_dofs: frozenset = frozenset()

    def __post_init__(self):
        locked = frozenset(self.locked_dofs)
        unknown = locked - set(DOF_NAMES)
        if unknown:
            raise ValueError(f"unknown DOF names {sorted(unknown)}")
        object.__setattr__(self, "locked_dofs", locked)

    @property
    def total_mass(self) -> float:
        return self.leader.mass + self.follower.mass + self.obj.mass

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SystemState:
    p_o: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_o: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def __post_init__(self):
        for name in ("p_o", "v_o", "eta", "omega"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))
        object.__setattr__(self, "t", float(self.t))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p_o, self.v_o, self.eta, self.omega])

    @classmethod
    def from_vector(cls, y: np.ndarray, t: float) -> "SystemState":
        return cls(y[0:3], y[3:6], y[6:9], y[9:12], t)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_vector())) and np.isfinite(self.t))


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray  # world frame, N
    torque: np.ndarray  # body frame, N m


def rotation_matrix(eta) -> np.ndarray:
    """Body-to-world rotation for Z-X-Y Euler angles ``(phi, theta, psi)``."""
    phi, theta, psi = eta
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cps, sps = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [cps * cth - sph * sps * sth, -cph * sps, cps * sth + cth * sph * sps],
            [cth * sps + cps * sph * sth, cph * cps, sps * sth - cps * cth * sph],
            [-cph * sth, sph, cph * cth],
        ]
    )


def cross(a, b) -> np.ndarray:
    """3-vector cross product (``np.cross`` is slow for single vectors)."""
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def cg_offset_at(t: float, traj: CgTrajectory) -> np.ndarray:
    """Body-frame CG offset ``amplitude * sin(w t) * axis``."""
    if t < 0:
        raise ValueError("time must be non-negative")
    return traj.amplitude * np.sin(traj.angular_frequency * t) * traj.axis


def parallel_axis(mass: float, offset: np.ndarray) -> np.ndarray:
    return mass * (np.dot(offset, offset) * np.eye(3) - np.outer(offset, offset))


def composite_inertia(
    leader: DroneParams, follower: DroneParams, obj: ObjectParams
) -> tuple[np.ndarray, float]:
    """Inertia of the bolted assembly about the object's geometric center.

    Returns ``(inertia, total_mass)``.
    """
    inertia = (
        obj.inertia
        + leader.inertia
        + parallel_axis(leader.mass, obj.attach_leader)
        + follower.inertia
        + parallel_axis(follower.mass, obj.attach_follower)
    )
    return inertia, leader.mass + follower.mass + obj.mass


def drone_positions(state: SystemState, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    R = rotation_matrix(state.eta)
    return state.p_o + R @ params.obj.attach_leader, state.p_o + R @ params.obj.attach_follower


def attachment_velocity(state: SystemState, offset: np.ndarray) -> np.ndarray:
    """World velocity of a body-fixed point at ``offset`` from the object center."""
    R = rotation_matrix(state.eta)
    return state.v_o + R @ cross(state.omega, offset)


def rotor_torque(forces: np.ndarray, drone: DroneParams) -> np.ndarray:
    f1, f2, f3, f4 = forces
    L, c = drone.arm_length, drone.rotor_moment_coeff
    return np.array([L * (f2 - f4), L * (f3 - f1), c * (f1 - f2 + f3 - f4)])


class _Model:
    """Precomputed constant terms for one parameter set."""

    def __init__(self, params: SystemParams):
        self.params = params
        obj = params.obj
        self.inertia, self.mass = composite_inertia(params.leader, params.follower, obj)
        self.first_moment = params.leader.mass * obj.attach_leader + params.follower.mass * obj.attach_follower
        self.coupled = bool(np.any(self.first_moment != 0.0))
        self.inertia_inv = np.linalg.inv(self.inertia)
        self.free = np.array([name not in params.locked_dofs for name in DOF_NAMES])
        self.constrained = not bool(np.all(self.free))

    def rotor_terms(self, rotors_l, rotors_f) -> tuple[float, np.ndarray]:
        """Total thrust and its body torque about the center; fixed over a step."""
        p = self.params
        thrust_l = float(rotors_l[0] + rotors_l[1] + rotors_l[2] + rotors_l[3])
        thrust_f = float(rotors_f[0] + rotors_f[1] + rotors_f[2] + rotors_f[3])
        torque = (
            rotor_torque(rotors_l, p.leader)
            + rotor_torque(rotors_f, p.follower)
            + cross(p.obj.attach_leader, thrust_l * Z_HAT)
            + cross(p.obj.attach_follower, thrust_f * Z_HAT)
        )
        return thrust_l + thrust_f, torque

    def accelerations(self, state_vec: np.ndarray, thrust: float, rotor_torque_body, r_cg) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        eta, omega = state_vec[6:9], state_vec[9:12]
        R = rotation_matrix(eta)
        g_body = R[2] * (-p.gravity)  # unit-mass weight in the body frame, R^T z
        force = R[:, 2] * thrust - self.mass * p.gravity * Z_HAT
        # drone first moments and the shifted object CG both feel gravity
        moment_arm = self.first_moment + p.obj.mass * r_cg
        torque = rotor_torque_body + cross(moment_arm, g_body) - cross(omega, self.inertia @ omega)

        if not self.coupled and not self.constrained:
            return force / self.mass, self.inertia_inv @ torque

        c = self.first_moment / self.mass
        force = force - self.mass * R @ cross(omega, cross(omega, c))
        mm = np.zeros((6, 6))
        mm[:3, :3] = self.mass * np.eye(3)
        mm[:3, 3:] = -self.mass * R @ skew(c)
        mm[3:, :3] = self.mass * skew(c) @ R.T
        mm[3:, 3:] = self.inertia
        rhs = np.concatenate([force, torque])
        acc = np.zeros(6)
        free = self.free
        acc[free] = np.linalg.solve(mm[np.ix_(free, free)], rhs[free])
        return acc[:3], acc[3:]

    def derivative(self, y: np.ndarray, t: float, thrust, rotor_torque_body, traj) -> np.ndarray:
        r_cg = cg_offset_at(t, traj)
        lin, ang = self.accelerations(y, thrust, rotor_torque_body, r_cg)
        return np.concatenate([y[3:6], lin, y[9:12], ang])


_MODEL_CACHE: dict[int, _Model] = {}


def _model(params: SystemParams) -> _Model:
    key = id(params)
    model = _MODEL_CACHE.get(key)
    if model is None or model.params is not params:
        if len(_MODEL_CACHE) > 64:
            _MODEL_CACHE.clear()
        model = _Model(params)
        _MODEL_CACHE[key] = model
    return model


def _check_rotors(forces, drone: DroneParams, name: str) -> np.ndarray:
    forces = np.asarray(forces, dtype=float).reshape(-1)
    if forces.shape != (4,):
        raise ValueError(f"{name} must hold 4 rotor forces")
    if not np.all(np.isfinite(forces)):
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = drone.rotor_force_limits
    if forces.min() < lo - 1e-9 or forces.max() > hi + 1e-9:
        raise ValueError(f"{name} outside rotor force limits {drone.rotor_force_limits}: {forces}")
    return forces


def accelerations(
    state: SystemState,
    rotors_l,
    rotors_f,
    params: SystemParams,
    traj: CgTrajectory,
) -> tuple[np.ndarray, np.ndarray]:
    """Instantaneous ``(p_o_ddot [world], omega_dot [body])`` at ``state``."""
    model = _model(params)
    r_cg = cg_offset_at(state.t, traj)
    thrust, torque = model.rotor_terms(np.asarray(rotors_l, float), np.asarray(rotors_f, float))
    return model.accelerations(state.as_vector(), thrust, torque, r_cg)


def step(
    state: SystemState,
    rotors_l,
    rotors_f,
    params: SystemParams,
    traj: CgTrajectory,
    dt: float,
) -> SystemState:
    """Advance the assembly by ``dt`` with classical RK4, rotor forces held.

    Raises ``ValueError`` for invalid inputs and :class:`DivergenceError` when the
    new state is non-finite or exceeds ``params.divergence_bound``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not state.is_finite():
        raise ValueError("state contains non-finite values")
    rotors_l = _check_rotors(rotors_l, params.leader, "rotors_l")
    rotors_f = _check_rotors(rotors_f, params.follower, "rotors_f")

    model = _model(params)
    y, t = state.as_vector(), state.t
    u = model.rotor_terms(rotors_l, rotors_f)
    k1 = model.derivative(y, t, *u, traj)
    k2 = model.derivative(y + 0.5 * dt * k1, t + 0.5 * dt, *u, traj)
    k3 = model.derivative(y + 0.5 * dt * k2, t + 0.5 * dt, *u, traj)
    k4 = model.derivative(y + dt * k3, t + dt, *u, traj)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.all(np.isfinite(y_next)) or np.max(np.abs(y_next)) > params.divergence_bound:
        raise DivergenceError(f"state left bound {params.divergence_bound} at t={t + dt:.3f}")
    return SystemState.from_vector(y_next, t + dt)


def drone_acceleration(state: SystemState, lin_acc, ang_acc, offset) -> np.ndarray:
    """Rigid-body acceleration of the attachment point at body ``offset``."""
    R = rotation_matrix(state.eta)
    omega = state.omega
    return lin_acc + R @ (cross(ang_acc, offset) + cross(omega, cross(omega, offset)))


def _drone_wrench(state, lin_acc, ang_acc, rotors, drone: DroneParams, offset, gravity) -> Wrench:
    R = rotation_matrix(state.eta)
    omega = state.omega
    thrust = float(np.sum(rotors))
    acc = drone_acceleration(state, lin_acc, ang_acc, offset)
    force = R @ Z_HAT * thrust - drone.mass * gravity * Z_HAT - drone.mass * acc
    torque = rotor_torque(rotors, drone) - cross(omega, drone.inertia @ omega) - drone.inertia @ ang_acc
    return Wrench(force, torque)


def interaction_wrench(
    state: SystemState, accels, rotors_l, rotors_f, params: SystemParams
) -> tuple[Wrench, Wrench]:
    """Contact wrenches each drone applies to the object.

    ``accels`` is ``(p_o_ddot, omega_dot)`` as returned by :func:`accelerations`.
    """
    lin_acc, ang_acc = (np.asarray(a, dtype=float) for a in accels)
    obj = params.obj
    wl = _drone_wrench(state, lin_acc, ang_acc, np.asarray(rotors_l, float), params.leader, obj.attach_leader, params.gravity)
    wf = _drone_wrench(state, lin_acc, ang_acc, np.asarray(rotors_f, float), params.follower, obj.attach_follower, params.gravity)
    return wl, wf


def force_residual(accels, wl: Wrench, wf: Wrench, params: SystemParams) -> np.ndarray:
    """Object translational balance ``m_o a_o - F_l - F_f + m_o g z``."""
    m_o = params.obj.mass
    return m_o * np.asarray(accels[0]) - wl.force - wf.force + m_o * params.gravity * Z_HAT


def torque_residual(
    state: SystemState, accels, wl: Wrench, wf: Wrench, params: SystemParams, r_cg=None
) -> np.ndarray:
    """Object rotational balance about its geometric center, body frame.

    The moving-CG weight moment is included so the residual closes exactly.
    """
    obj = params.obj
    R = rotation_matrix(state.eta)
    omega = state.omega
    if r_cg is None:
        r_cg = np.zeros(3)
    g_body = R.T @ Z_HAT * (-params.gravity)
    rhs = (
        wl.torque
        + wf.torque
        - cross(omega, obj.inertia @ omega)
        + cross(obj.attach_leader, R.T @ wl.force)
        + cross(obj.attach_follower, R.T @ wf.force)
        + cross(r_cg, obj.mass * g_body)
    )
    return obj.inertia @ np.asarray(accels[1]) - rhs


def mechanical_energy(state: SystemState, params: SystemParams) -> float:
    """Kinetic plus potential energy of the assembly (nominal mass distribution)."""
    inertia, mass = composite_inertia(params.leader, params.follower, params.obj)
    model = _model(params)
    R = rotation_matrix(state.eta)
    com = state.p_o + R @ (model.first_moment / mass)
    v_com = attachment_velocity(state, model.first_moment / mass)
    # rotational KE about the com
    i_com = inertia - parallel_axis(mass, model.first_moment / mass)
    return 0.5 * mass * v_com @ v_com + 0.5 * state.omega @ i_com @ state.omega + mass * params.gravity * com[2]
