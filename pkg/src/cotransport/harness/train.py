from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..env import ACT_DIM, DIVERGED, OBS_DIM, CooperativeTransportEnv, action_deviation
from ..sac import NonFiniteLoss, SacAgent, Transition
from .config import RunConfig, save_config
from .logs import REWARD_COLUMNS, REWARD_SCHEMA, CsvLog

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite loss; diagnostics were written to disk."""


@dataclass
class TrainResult:
    agent: SacAgent
    episodes: list = field(repr=False)
    reward_log: Path | None = None
    checkpoint: Path | None = None

    @property
    def returns(self) -> np.ndarray:
        return np.array([e["return"] for e in self.episodes])


def make_agent(config: RunConfig) -> SacAgent:
    return SacAgent(OBS_DIM, ACT_DIM, config.env.bounds.scale, config.sac)


def train(config: RunConfig, output_dir=None, write_files: bool = True, agent: SacAgent | None = None) -> TrainResult:
    """Run ``config.episodes`` training episodes.

    Each environment step stores a transition; after the warmup period (uniform
    random actions) the agent performs ``updates_per_round`` updates every
    ``update_every`` steps.  Horizon truncation is stored as non-terminal so
    the value bootstrap is kept; only divergence ends the return.
    """
    out = Path(output_dir or config.output_dir)
    env = CooperativeTransportEnv(config.env)
    agent = agent or make_agent(config)
    sac = config.sac
    reward_log = None
    if write_files:
        out.mkdir(parents=True, exist_ok=True)
        save_config(config, out / "config.yaml")
        reward_log = CsvLog(out / "rewards.csv", REWARD_SCHEMA, REWARD_COLUMNS)

    episodes = []
    try:
        for ep in range(1, config.episodes + 1):
            obs = env.reset()
            total, deviation, done = 0.0, 0.0, False
            while not done:
                if agent.total_steps < sac.warmup_steps:
                    action, unit = agent.random_action()
                else:
                    action, unit = agent.act(obs)
                obs_next, r, done, info = env.step(action)
                terminal = info["termination"] == DIVERGED
                agent.observe(Transition(obs, action, unit, r, obs_next, terminal))
                total += r
                deviation += action_deviation(info["leader_action"], info["follower_action"])
                obs = obs_next
                if agent.should_update():
                    for _ in range(sac.updates_per_round):
                        try:
                            agent.update()
                        except NonFiniteLoss as exc:
                            _dump_diagnostics(agent, exc, out if write_files else None, ep)
                            raise TrainingDiverged(str(exc)) from exc

            recent = [e["return"] for e in episodes[-(config.smoothing_window - 1):]] + [total]
            row = {
                "episode": ep,
                "steps": env.steps,
                "total_steps": agent.total_steps,
                "return": float(total),
                "mean_reward": float(total / env.steps),
                "smoothed_return": float(np.mean(recent)),
                "termination": env.termination,
                "mean_deviation": float(deviation / env.steps),
                "final_distance": float(info["distance"]),
            }
            episodes.append(row)
            if reward_log:
                reward_log.write(row)
                reward_log.flush()
            if ep % 10 == 0 or ep == 1:
                log.info(
                    "episode %d steps=%d return=%.1f smoothed=%.1f deviation=%.4f %s",
                    ep, env.steps, total, row["smoothed_return"], row["mean_deviation"], env.termination,
                )
            if write_files and ep % config.checkpoint_every == 0:
                agent.save(out / "checkpoints" / f"episode_{ep:05d}.npz")
    finally:
        if reward_log:
            reward_log.close()

    checkpoint = None
    if write_files:
        checkpoint = out / "checkpoint.npz"
        agent.save(checkpoint)
    return TrainResult(agent, episodes, reward_log.path if reward_log else None, checkpoint)


def _dump_diagnostics(agent: SacAgent, exc: NonFiniteLoss, out: Path | None, episode: int):
    log.error("non-finite loss in episode %d: %s", episode, exc.report)
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostics.json").write_text(
        json.dumps({"episode": episode, "updates": agent.updates, "report": exc.report}, indent=2, default=str)
    )
    agent.save(out / "diverged_checkpoint.npz")
