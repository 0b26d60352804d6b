"""Episodic follower task: leader PID + learned follower carrying a rod.

``CooperativeTransportEnv`` follows the familiar ``reset()`` / ``step(action)``
protocol.  The follower acts with ``(phi_d, theta_d, az_d)``; the leader's
command is computed internally and only enters through the reward.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    CgTrajectory,
    DivergenceError,
    ObjectParams,
    SystemParams,
    SystemState,
    cg_offset_at,
    cross,
    composite_inertia,
    rotation_matrix,
    step as dynamics_step,
)
from .inner_control import ActionBounds, AttitudeGains, ControlAction, attitude_control, mix
from .leader import PidGains, PidState, leader_action

OBS_DIM = 18
ACT_DIM = 3
REWARD_WEIGHT = 10.0

HORIZON = "horizon"
DIVERGED = "diverged"


@dataclass(frozen=True)
class EpisodeConfig:
    goal: tuple = (1.0, 1.0, 1.0)
    max_steps: int = 1000
    d_term: float = 2.5
    cg: CgTrajectory = field(default_factory=CgTrajectory)
    object_mass: float = 0.2
    dt: float = 0.01
    seed: int = 0
    # draw a fresh goal per episode, uniform in [-goal_range, goal_range]^3
    random_goal: bool = False
    goal_range: float = 1.0
    leader_gains: PidGains = field(default_factory=PidGains)
    bounds: ActionBounds = field(default_factory=ActionBounds)
    attitude_kp_scale: float = 900.0
    attitude_kd_scale: float = 42.0
    # pitch-locked rig: only heave and roll are free, leader tracks its own position
    test_stand: bool = False
    leader_goal: tuple = (0.0, 0.0, 0.08)

    def __post_init__(self):
        object.__setattr__(self, "goal", tuple(float(v) for v in np.asarray(self.goal, float).reshape(3)))
        object.__setattr__(self, "leader_goal", tuple(float(v) for v in np.asarray(self.leader_goal, float).reshape(3)))
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.d_term <= 0:
            raise ValueError("d_term must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.object_mass < 0:
            raise ValueError("object_mass must be non-negative")

    def replace(self, **changes) -> "EpisodeConfig":
        return dataclasses.replace(self, **changes)


def system_params(config: EpisodeConfig) -> SystemParams:
    if config.test_stand:
        obj = ObjectParams(mass=config.object_mass, axis=np.array([0.0, 1.0, 0.0]))
        params = SystemParams(obj=obj, locked_dofs=frozenset({"x", "y", "pitch", "yaw"}))
    else:
        params = SystemParams(obj=ObjectParams(mass=config.object_mass))
    config.cg.check_fits(params.obj)
    return params


def reward(leader: ControlAction, follower: ControlAction) -> float:
    """Weighted absolute mismatch of the two commands; 0 only for identical actions."""
    return -REWARD_WEIGHT * (
        abs(leader.az_d - follower.az_d) + abs(leader.phi_d - follower.phi_d) + abs(leader.theta_d - follower.theta_d)
    )


def action_deviation(leader: ControlAction, follower: ControlAction) -> float:
    return abs(leader.az_d - follower.az_d) + abs(leader.phi_d - follower.phi_d) + abs(leader.theta_d - follower.theta_d)


def build_observation(state: SystemState, goal, params: SystemParams) -> np.ndarray:
    """``[p_f, eta, v_f, eta_dot, e_o, e_o_dot]`` for the follower."""
    R = rotation_matrix(state.eta)
    r_f = params.obj.attach_follower
    p_f = state.p_o + R @ r_f
    v_f = state.v_o + R @ cross(state.omega, r_f)
    e_o = np.asarray(goal, dtype=float) - state.p_o
    return np.concatenate([p_f, state.eta, v_f, state.omega, e_o, -state.v_o])


class CooperativeTransportEnv:
    def __init__(self, config: EpisodeConfig | None = None):
        self.config = config or EpisodeConfig()
        self.params = system_params(self.config)
        inertia, _ = composite_inertia(self.params.leader, self.params.follower, self.params.obj)
        gains = AttitudeGains.for_inertia(inertia / 2.0, self.config.attitude_kp_scale, self.config.attitude_kd_scale)
        self.gains_l = self.gains_f = gains
        half_obj = self.params.obj.mass / 2.0
        self.share_l = self.params.leader.mass + half_obj
        self.share_f = self.params.follower.mass + half_obj
        self.rng = np.random.default_rng(self.config.seed)
        self.state: SystemState | None = None
        self.pid = PidState()
        self.goal = np.array(self.config.goal)
        self.steps = 0
        self.done = True
        self.termination: str | None = None

    @property
    def leader_goal(self) -> np.ndarray:
        if self.config.test_stand:
            return np.array(self.config.leader_goal)
        return self.goal

    def seed(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def reset(self) -> np.ndarray:
        cfg = self.config
        if cfg.test_stand:
            # leader drone starts at the world origin
            p0 = -self.params.obj.attach_leader
            self.goal = np.array(cfg.leader_goal) - self.params.obj.attach_leader
        else:
            p0 = np.zeros(3)
            if cfg.random_goal:
                self.goal = self.rng.uniform(-cfg.goal_range, cfg.goal_range, size=3)
            else:
                self.goal = np.array(cfg.goal)
        self.state = SystemState(p_o=p0)
        self.pid = PidState()
        self.steps = 0
        self.done = False
        self.termination = None
        return self.observation()

    def observation(self) -> np.ndarray:
        return build_observation(self.state, self.goal, self.params)

    def _leader(self) -> tuple[ControlAction, PidState]:
        cfg = self.config
        return leader_action(
            self.state,
            self.leader_goal,
            self.pid,
            cfg.leader_gains,
            cfg.dt,
            params=self.params,
            track="leader" if cfg.test_stand else "object",
            bounds=cfg.bounds,
            pitch_locked=cfg.test_stand,
        )

    def peek_leader_action(self) -> ControlAction:
        """The command the leader is about to issue (no state change)."""
        return self._leader()[0]

    def _rotors(self, action: ControlAction, drone, share, gains) -> np.ndarray:
        thrust, torques = attitude_control(self.state, action, drone, share, gains, self.params.gravity)
        return mix(thrust, torques, drone).forces

    def step(self, action):
        if self.state is None or self.done:
            raise RuntimeError("episode is finished; call reset() first")
        cfg = self.config
        if isinstance(action, ControlAction):
            follower = ControlAction(action.phi_d, action.theta_d, action.az_d, 0.0)
        else:
            follower = ControlAction.from_array(action)
        follower = cfg.bounds.clamp(follower)
        if cfg.test_stand:
            follower = dataclasses.replace(follower, theta_d=0.0)

        lead, self.pid = self._leader()
        rotors_l = self._rotors(lead, self.params.leader, self.share_l, self.gains_l)
        rotors_f = self._rotors(follower, self.params.follower, self.share_f, self.gains_f)

        r = reward(lead, follower)
        self.steps += 1
        try:
            self.state = dynamics_step(self.state, rotors_l, rotors_f, self.params, cfg.cg, cfg.dt)
        except DivergenceError:
            self.termination = DIVERGED
        else:
            distance = np.linalg.norm(self.state.p_o - self.goal)
            tilted = np.any(np.abs(self.state.eta[:2]) >= np.pi / 2)
            if distance > cfg.d_term or tilted:
                self.termination = DIVERGED
            elif self.steps >= cfg.max_steps:
                self.termination = HORIZON
        self.done = self.termination is not None

        info = {
            "t": self.state.t,
            "step": self.steps,
            "leader_action": lead,
            "follower_action": follower,
            "termination": self.termination,
            "cg_offset": cg_offset_at(self.state.t, cfg.cg),
            "distance": float(np.linalg.norm(self.state.p_o - self.goal)),
        }
        return self.observation(), r, self.done, info
