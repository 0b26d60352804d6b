"""Versioned CSV writers.  Every file opens with a ``# schema: <name> v<N>`` line."""
from __future__ import annotations

import csv
from pathlib import Path

import pandas as pd

TRAJECTORY_SCHEMA = ("cotransport.trajectory", 1)
REWARD_SCHEMA = ("cotransport.rewards", 1)
SWEEP_SCHEMA = ("cotransport.sweep", 1)

TRAJECTORY_COLUMNS = [
    "step", "t",
    "p_o_x", "p_o_y", "p_o_z",
    "phi", "theta", "psi",
    "leader_phi_d", "leader_theta_d", "leader_az_d",
    "follower_phi_d", "follower_theta_d", "follower_az_d",
    "reward",
    "cg_x", "cg_y", "cg_z",
]  # fmt: skip

REWARD_COLUMNS = [
    "episode", "steps", "total_steps", "return", "mean_reward",
    "smoothed_return", "termination", "mean_deviation", "final_distance",
]  # fmt: skip

SWEEP_COLUMNS = [
    "sweep", "cg_speed", "object_mass", "episode", "termination", "steps",
    "final_distance", "max_distance", "settling_time", "mean_deviation", "return",
]  # fmt: skip


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return value


class CsvLog:
    def __init__(self, path, schema: tuple[str, int], columns: list[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.columns = columns
        self._fh = open(self.path, "w", newline="")
        self._fh.write(f"# schema: {schema[0]} v{schema[1]}\n")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(columns)

    def write(self, row: dict):
        self._writer.writerow([_fmt(row[c]) for c in self.columns])

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_rows(path, schema, columns, rows):
    with CsvLog(path, schema, columns) as log:
        for row in rows:
            log.write(row)


def read_csv(path) -> pd.DataFrame:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# schema:"):
        raise ValueError(f"{path} has no schema line")
    return pd.read_csv(path, comment="#")


def schema_of(path) -> tuple[str, int]:
    with open(path) as fh:
        name, version = fh.readline().removeprefix("# schema:").split()
    return name, int(version.lstrip("v"))
