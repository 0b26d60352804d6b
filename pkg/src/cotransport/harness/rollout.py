"""Single-episode rollouts with optional per-step trajectory records."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import CooperativeTransportEnv, action_deviation

SETTLE_BAND = 0.05


@dataclass
class RolloutResult:
    termination: str
    steps: int
    episode_return: float
    mean_deviation: float
    final_distance: float
    max_distance: float
    settling_time: float | None
    rows: list = field(default_factory=list, repr=False)


def settling_time(distances, dt: float, initial: float, band: float = SETTLE_BAND) -> float | None:
    """First time after which the distance stays within ``band * initial``."""
    distances = np.asarray(distances)
    if len(distances) == 0 or initial <= 0:
        return None
    outside = np.nonzero(distances > band * initial)[0]
    if len(outside) == 0:
        return 0.0
    if outside[-1] == len(distances) - 1:
        return None
    return float((outside[-1] + 1) * dt)


def oracle_policy(env: CooperativeTransportEnv):
    """Follower that issues exactly the leader's next command."""

    def act(obs):
        return env.peek_leader_action().as_array()

    return act


def agent_policy(agent, deterministic: bool = True):
    def act(obs):
        return agent.act(obs, deterministic=deterministic)[0]

    return act


def rollout(env: CooperativeTransportEnv, policy, record: bool = False) -> RolloutResult:
    obs = env.reset()
    initial = float(np.linalg.norm(env.state.p_o - env.goal))
    rows, distances = [], []
    total = 0.0
    deviation = 0.0
    done = False
    info = {}
    while not done:
        obs, r, done, info = env.step(policy(obs))
        total += r
        lead, fol = info["leader_action"], info["follower_action"]
        deviation += action_deviation(lead, fol)
        distances.append(info["distance"])
        if record:
            st = env.state
            rows.append(
                {
                    "step": info["step"],
                    "t": float(st.t),
                    "p_o_x": float(st.p_o[0]),
                    "p_o_y": float(st.p_o[1]),
                    "p_o_z": float(st.p_o[2]),
                    "phi": float(st.eta[0]),
                    "theta": float(st.eta[1]),
                    "psi": float(st.eta[2]),
                    "leader_phi_d": lead.phi_d,
                    "leader_theta_d": lead.theta_d,
                    "leader_az_d": lead.az_d,
                    "follower_phi_d": fol.phi_d,
                    "follower_theta_d": fol.theta_d,
                    "follower_az_d": fol.az_d,
                    "reward": float(r),
                    "cg_x": float(info["cg_offset"][0]),
                    "cg_y": float(info["cg_offset"][1]),
                    "cg_z": float(info["cg_offset"][2]),
                }
            )
    steps = env.steps
    return RolloutResult(
        termination=info["termination"],
        steps=steps,
        episode_return=float(total),
        mean_deviation=float(deviation / steps),
        final_distance=float(distances[-1]),
        max_distance=float(np.max(distances)),
        settling_time=settling_time(distances, env.config.dt, initial),
        rows=rows,
    )
