"""Evaluation sweeps, single rollouts, the test-stand variant and thrust export."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..dynamics import CgTrajectory
from ..env import CooperativeTransportEnv, EpisodeConfig
from ..leader import PidGains
from ..sac import SacAgent
from .config import ThrustMapping
from .logs import SWEEP_COLUMNS, SWEEP_SCHEMA, TRAJECTORY_COLUMNS, TRAJECTORY_SCHEMA, write_rows
from .rollout import RolloutResult, agent_policy, oracle_policy, rollout

log = logging.getLogger(__name__)

BASELINE_CG_SPEED = 0.31
BASELINE_MASS = 0.2
CG_SPEEDS = (0.1, 0.31, 0.6, 1.0)
MASSES = (0.1, 0.2, 0.3, 0.4)


def thrust_command(az_d: float, mapping: ThrustMapping = ThrustMapping()) -> int:
    """Crazyflie thrust counts ``thr_hov + k_pz * az_d``, rounded and clamped."""
    if not np.isfinite(az_d):
        raise ValueError("az_d must be finite")
    counts = int(round(mapping.thr_hov + mapping.k_pz * az_d))
    return int(min(max(counts, mapping.min), mapping.max))


def test_stand_mode(config: EpisodeConfig) -> EpisodeConfig:
    """Pitch-locked rig: rod along body Y, only heave and roll free, the leader
    tracks its own position with the experimental gains."""
    cg = replace(config.cg, axis=np.array([0.0, 1.0, 0.0]))
    return config.replace(test_stand=True, cg=cg, leader_gains=PidGains.experiment(), leader_goal=(0.0, 0.0, 0.08))


def sweep_points(kind: str) -> list[tuple[float, float]]:
    """``(cg_speed, object_mass)`` pairs; the training point is always present."""
    if kind == "cg":
        points = [(w, BASELINE_MASS) for w in CG_SPEEDS]
    elif kind == "mass":
        points = [(BASELINE_CG_SPEED, m) for m in MASSES]
    else:
        raise ValueError(f"unknown sweep {kind!r}; expected 'cg' or 'mass'")
    if (BASELINE_CG_SPEED, BASELINE_MASS) not in points:
        points.append((BASELINE_CG_SPEED, BASELINE_MASS))
    return points


def point_config(base: EpisodeConfig, cg_speed: float, mass: float) -> EpisodeConfig:
    cg = CgTrajectory(base.cg.amplitude, cg_speed, base.cg.axis)
    return base.replace(cg=cg, object_mass=mass)


def _run_point(args) -> list[dict]:
    checkpoint, base, kind, cg_speed, mass, episodes = args
    agent = SacAgent.load(checkpoint) if isinstance(checkpoint, (str, Path)) else checkpoint
    env = CooperativeTransportEnv(point_config(base, cg_speed, mass))
    rows = []
    for ep in range(episodes):
        res = rollout(env, agent_policy(agent, deterministic=True))
        rows.append(
            {
                "sweep": kind,
                "cg_speed": float(cg_speed),
                "object_mass": float(mass),
                "episode": ep,
                "termination": res.termination,
                "steps": res.steps,
                "final_distance": res.final_distance,
                "max_distance": res.max_distance,
                "settling_time": res.settling_time,
                "mean_deviation": res.mean_deviation,
                "return": res.episode_return,
            }
        )
    return rows


def evaluate(
    checkpoint,
    sweep: str,
    episodes_per_point: int = 1,
    base: EpisodeConfig | None = None,
    output_dir=None,
    workers: int = 1,
) -> list[dict]:
    """Deterministic-policy episodes over a CG-speed or object-mass sweep.

    ``checkpoint`` is a path or an already loaded :class:`SacAgent`.  Points are
    independent and may run in ``workers`` processes; the row order is fixed.
    """
    base = base or EpisodeConfig()
    jobs = [(checkpoint, base, sweep, w, m, episodes_per_point) for w, m in sweep_points(sweep)]
    if workers > 1 and isinstance(checkpoint, (str, Path)):
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(job) for job in jobs]
    rows = [row for point in results for row in point]
    if output_dir is not None:
        write_rows(Path(output_dir) / f"sweep_{sweep}.csv", SWEEP_SCHEMA, SWEEP_COLUMNS, rows)
    for row in rows:
        log.info(
            "w=%.2f m=%.2f %s steps=%d final=%.3f", row["cg_speed"], row["object_mass"],
            row["termination"], row["steps"], row["final_distance"],
        )
    return rows


def simulate(follower, config: EpisodeConfig | None = None, output=None) -> RolloutResult:
    """One deterministic episode with full logging.

    ``follower`` is ``"oracle"`` (copy the leader), a :class:`SacAgent`, or a
    checkpoint path.
    """
    env = CooperativeTransportEnv(config or EpisodeConfig())
    if isinstance(follower, str) and follower == "oracle":
        policy = oracle_policy(env)
    else:
        agent = SacAgent.load(follower) if isinstance(follower, (str, Path)) else follower
        policy = agent_policy(agent, deterministic=True)
    result = rollout(env, policy, record=True)
    if output is not None:
        write_rows(output, TRAJECTORY_SCHEMA, TRAJECTORY_COLUMNS, result.rows)
    return result
