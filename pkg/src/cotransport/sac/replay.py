from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray  # environment-scaled action
    a_unit: np.ndarray  # squashed action in [-1, 1], before scaling
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    a_unit: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)

    def astype(self, dtype) -> "Batch":
        return Batch(*(np.asarray(getattr(self, f), dtype=dtype) for f in FIELDS))


FIELDS = ("s", "a", "a_unit", "r", "s_next", "done")


class ReplayBuffer:
    """Fixed-capacity ring buffer; uniform sampling with replacement."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, dtype=np.float32):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.dtype = np.dtype(dtype)
        self.s = np.zeros((capacity, obs_dim), dtype=self.dtype)
        self.a = np.zeros((capacity, act_dim), dtype=self.dtype)
        self.a_unit = np.zeros((capacity, act_dim), dtype=self.dtype)
        self.r = np.zeros(capacity, dtype=self.dtype)
        self.s_next = np.zeros((capacity, obs_dim), dtype=self.dtype)
        self.done = np.zeros(capacity, dtype=self.dtype)
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition):
        if not np.isfinite(tr.r):
            raise ValueError("reward must be finite")
        i = self.ptr
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.a_unit[i] = tr.a_unit
        self.r[i] = tr.r
        self.s_next[i] = tr.s_next
        self.done[i] = float(tr.done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, cannot sample {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def gather(self, idx) -> Batch:
        return Batch(self.s[idx], self.a[idx], self.a_unit[idx], self.r[idx], self.s_next[idx], self.done[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(batch_size, rng))

    def oldest_first(self) -> Batch:
        """All stored transitions in insertion order."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.capacity) + self.ptr) % self.capacity
        return self.gather(idx)

    def state_arrays(self) -> dict:
        return {f: getattr(self, f)[: self.size].copy() for f in FIELDS} | {"ptr": np.array(self.ptr)}

    def load_arrays(self, arrays: dict):
        n = len(arrays["r"])
        for f in FIELDS:
            getattr(self, f)[:n] = arrays[f]
        self.size = n
        self.ptr = int(arrays["ptr"])
