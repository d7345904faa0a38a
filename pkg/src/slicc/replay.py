"""FIFO experience replay holding paired prosocial/introspective transitions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import N_ACTIONS
from .errors import InputError, InsufficientDataError


@dataclass(frozen=True)
class JointTransition:
    o_p: np.ndarray
    a_p: int
    r_p: float
    o_p_next: np.ndarray
    o_i: np.ndarray
    a_i: int
    r_i: float
    o_i_next: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not (0 <= self.a_p < N_ACTIONS and 0 <= self.a_i < N_ACTIONS):
            raise InputError(f"action indices out of range: {(self.a_p, self.a_i)}")
        for name, n in (("o_p", 8), ("o_p_next", 8), ("o_i", 4), ("o_i_next", 4)):
            vec = getattr(self, name)
            if np.shape(vec) != (n,) or not np.all(np.isfinite(vec)):
                raise InputError(f"{name} must be a finite vector of length {n}")


class ReplayBuffer:
    """Ring buffer; the oldest transition is evicted once ``capacity`` is reached.

    Storage is columnar so mini-batches can be gathered without building
    Python objects. Logical index 0 is always the oldest survivor.
    """

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise InputError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._cols = {
            "o_p": np.zeros((capacity, 8)),
            "a_p": np.zeros(capacity, dtype=np.intp),
            "r_p": np.zeros(capacity),
            "o_p_next": np.zeros((capacity, 8)),
            "o_i": np.zeros((capacity, 4)),
            "a_i": np.zeros(capacity, dtype=np.intp),
            "r_i": np.zeros(capacity),
            "o_i_next": np.zeros((capacity, 4)),
            "terminal": np.zeros(capacity, dtype=bool),
        }
        self._start = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def _physical(self, i):
        return (self._start + i) % self.capacity

    def __getitem__(self, i: int) -> JointTransition:
        if not -self._count <= i < self._count:
            raise IndexError(i)
        j = self._physical(i % self._count)
        c = self._cols
        return JointTransition(
            c["o_p"][j].copy(), int(c["a_p"][j]), float(c["r_p"][j]), c["o_p_next"][j].copy(),
            c["o_i"][j].copy(), int(c["a_i"][j]), float(c["r_i"][j]), c["o_i_next"][j].copy(),
            bool(c["terminal"][j]),
        )

    def __iter__(self):
        return (self[i] for i in range(self._count))

    def push(self, t: JointTransition) -> "ReplayBuffer":
        if self._count < self.capacity:
            j = self._physical(self._count)
            self._count += 1
        else:
            j = self._start
            self._start = (self._start + 1) % self.capacity
        for name, col in self._cols.items():
            col[j] = getattr(t, name)
        return self

    def sample_indices(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        """Logical indices drawn uniformly without replacement."""
        if batch > self._count:
            raise InsufficientDataError(f"need {batch} transitions, buffer holds {self._count}")
        return rng.choice(self._count, size=batch, replace=False)

    def sample(self, rng: np.random.Generator, batch: int = 64) -> list[JointTransition]:
        return [self[int(i)] for i in self.sample_indices(rng, batch)]

    def sample_arrays(self, rng: np.random.Generator, batch: int = 64) -> dict[str, np.ndarray]:
        """Same draw as :meth:`sample`, returned as stacked columns."""
        j = self._physical(self.sample_indices(rng, batch))
        return {name: col[j] for name, col in self._cols.items()}


def stack(batch: list[JointTransition]) -> dict[str, np.ndarray]:
    """Column-wise arrays for a sampled mini-batch."""
    return {
        "o_p": np.stack([t.o_p for t in batch]),
        "a_p": np.array([t.a_p for t in batch], dtype=np.intp),
        "r_p": np.array([t.r_p for t in batch]),
        "o_p_next": np.stack([t.o_p_next for t in batch]),
        "o_i": np.stack([t.o_i for t in batch]),
        "a_i": np.array([t.a_i for t in batch], dtype=np.intp),
        "r_i": np.array([t.r_i for t in batch]),
        "o_i_next": np.stack([t.o_i_next for t in batch]),
        "terminal": np.array([t.terminal for t in batch], dtype=bool),
    }
