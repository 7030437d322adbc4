"""Uniform experience replay with termination-kind bookkeeping."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Termination(enum.IntEnum):
    NONE = 0
    TRUE_TERMINAL = 1
    TIME_LIMIT = 2


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    termination: Termination = Termination.NONE

    @property
    def is_true_terminal(self) -> bool:
        return self.termination == Termination.TRUE_TERMINAL


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminations: np.ndarray

    @property
    def done(self) -> np.ndarray:
        """Mask of true terminals; time-limit ends are ordinary transitions."""
        return self.terminations == Termination.TRUE_TERMINAL

    def __len__(self):
        return self.rewards.shape[0]


class EmptyBufferError(RuntimeError):
    pass


class ReplayBuffer:
    """Ring buffer of fixed capacity; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminations = np.zeros(capacity, dtype=np.int8)
        self.count = 0
        self.cursor = 0
        self.last_terminal: Transition | None = None

    def __len__(self):
        return self.count

    def push(self, t: Transition) -> None:
        s = np.asarray(t.state, dtype=np.float64)
        a = np.asarray(t.action, dtype=np.float64)
        s2 = np.asarray(t.next_state, dtype=np.float64)
        if s.shape != (self.state_dim,) or s2.shape != (self.state_dim,) \
                or a.shape != (self.action_dim,):
            raise ValueError(
                f"transition dims {s.shape}/{a.shape}/{s2.shape} do not match "
                f"buffer ({self.state_dim}, {self.action_dim})")
        i = self.cursor
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = t.reward
        self.next_states[i] = s2
        self.terminations[i] = int(t.termination)
        self.cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)
        if t.termination == Termination.TRUE_TERMINAL:
            self.last_terminal = Transition(s.copy(), a.copy(), float(t.reward), s2.copy(),
                                            Termination.TRUE_TERMINAL)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.count == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        if n < 1:
            raise ValueError("n must be positive")
        return rng.integers(0, self.count, size=n)

    def gather(self, idx: np.ndarray) -> Batch:
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.terminations[idx])

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(n, rng))

    def transition(self, i: int) -> Transition:
        return Transition(self.states[i].copy(), self.actions[i].copy(), float(self.rewards[i]),
                          self.next_states[i].copy(), Termination(int(self.terminations[i])))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> list[Transition]:
        """``n`` draws with replacement, as ``Transition`` records."""
        return [self.transition(int(i)) for i in self.sample_indices(n, rng)]

    def ordered(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""
        start = self.cursor if self.count == self.capacity else 0
        return [self.transition((start + k) % self.capacity) for k in range(self.count)]
