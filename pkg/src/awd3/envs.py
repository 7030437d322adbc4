"""Bundled continuous-control tasks and Monte-Carlo true-Q rollouts.

Each environment is defined by a pure, batched ``dynamics`` function so
that the rollout estimator can advance many injected states at once.
Episodes distinguish genuine terminals from time-limit truncation.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .replay import Termination

MC_TAIL_TOLERANCE = 1e-4


class CapabilityError(RuntimeError):
    """The environment cannot re-enter arbitrary states."""


class EpisodeOverError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    action_bound: float
    time_limit: int
    gamma: float = 0.99

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.action_bound <= 0:
            raise ValueError("action_bound must be positive")
        if self.time_limit < 1:
            raise ValueError("time_limit must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")


class Env:
    """Base class: subclasses provide ``spec``, ``r_max``, ``dynamics`` and ``initial_state``.

    The time-limit signal fires once, on the step that reaches
    ``spec.time_limit``; stepping on afterwards is allowed (rollouts treat
    truncation as an ordinary transition).  Stepping after a true terminal
    requires ``reset``.
    """

    spec: EnvSpec
    r_max: float

    def __init__(self):
        self._rng = np.random.default_rng(0)
        self._state: np.ndarray | None = None
        self._elapsed = 0
        self._done = False

    def dynamics(self, states: np.ndarray, actions: np.ndarray):
        """Batched ``(next_states, rewards, terminal_mask)``; actions are clipped here."""
        raise NotImplementedError

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def state(self) -> np.ndarray:
        if self._state is None:
            raise EpisodeOverError("environment has not been reset")
        return self._state.copy()

    def clip_action(self, a: np.ndarray) -> np.ndarray:
        b = self.spec.action_bound
        return np.clip(a, -b, b)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._state = np.asarray(self.initial_state(self._rng), dtype=np.float64)
        self._elapsed = 0
        self._done = False
        return self._state.copy()

    def set_state(self, state: np.ndarray) -> None:
        """Inject ``state`` as the start of a fresh episode."""
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.spec.state_dim,):
            raise ValueError(f"state shape {state.shape} != ({self.spec.state_dim},)")
        self._state = state.copy()
        self._elapsed = 0
        self._done = False

    def step(self, action: np.ndarray):
        if self._state is None:
            raise EpisodeOverError("step before reset")
        if self._done:
            raise EpisodeOverError("step after a true terminal without reset")
        action = np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim)
        s2, r, term = self.dynamics(self._state[None, :], action[None, :])
        self._state = s2[0]
        self._elapsed += 1
        if term[0]:
            self._done = True
            kind = Termination.TRUE_TERMINAL
        elif self._elapsed == self.spec.time_limit:
            kind = Termination.TIME_LIMIT
        else:
            kind = Termination.NONE
        return self._state.copy(), float(r[0]), kind


def angle_normalize(x):
    return ((x + np.pi) % (2.0 * np.pi)) - np.pi


class PendulumSwingUp(Env):
    """Torque-limited swing-up; observation ``(cos th, sin th, th_dot)``, never terminal."""

    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    length = 1.0

    def __init__(self, gamma: float = 0.99):
        super().__init__()
        self.spec = EnvSpec("pendulum", 3, 1, self.max_torque, 200, gamma)
        self.r_max = math.pi ** 2 + 0.1 * self.max_speed ** 2 + 0.001 * self.max_torque ** 2

    def initial_state(self, rng):
        th = rng.uniform(-np.pi, np.pi)
        thdot = rng.uniform(-1.0, 1.0)
        return np.array([np.cos(th), np.sin(th), thdot])

    def dynamics(self, states, actions):
        th = np.arctan2(states[:, 1], states[:, 0])
        thdot = states[:, 2]
        u = np.clip(actions[:, 0], -self.max_torque, self.max_torque)
        cost = angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        l = self.length
        new_thdot = thdot + (3.0 * self.g / (2.0 * l) * np.sin(th)
                             + 3.0 / (self.m * l ** 2) * u) * self.dt
        new_thdot = np.clip(new_thdot, -self.max_speed, self.max_speed)
        new_th = th + new_thdot * self.dt
        nxt = np.stack([np.cos(new_th), np.sin(new_th), new_thdot], axis=1)
        return nxt, -cost, np.zeros(states.shape[0], dtype=bool)


class PointGoal2D(Env):
    """Velocity-controlled point in ``[-1, 1]^2`` that terminates on reaching the goal.

    Episodes start uniformly in a small box of half-width ``start_spread``
    around ``start``, diagonally across the arena from the goal.  A narrow
    start box keeps the random-policy return distribution tight enough that
    learning is measurable against it.
    """

    goal_radius = 0.05
    goal_bonus = 10.0

    def __init__(self, goal=(0.5, 0.5), start=(-0.6, -0.6), start_spread: float = 0.1,
                 gamma: float = 0.99):
        super().__init__()
        self.goal = np.asarray(goal, dtype=np.float64)
        self.start = np.asarray(start, dtype=np.float64)
        if start_spread < 0:
            raise ValueError("start_spread must be non-negative")
        self.start_spread = float(start_spread)
        self.spec = EnvSpec("pointgoal2d", 2, 2, 0.1, 100, gamma)
        self.r_max = self.goal_bonus

    def initial_state(self, rng):
        while True:
            p = np.clip(self.start + rng.uniform(-self.start_spread, self.start_spread, size=2),
                        -1.0, 1.0)
            if np.linalg.norm(p - self.goal) >= self.goal_radius:
                return p

    def dynamics(self, states, actions):
        a = self.clip_action(actions)
        p2 = np.clip(states + a, -1.0, 1.0)
        dist = np.sqrt(np.sum((p2 - self.goal) ** 2, axis=1))
        reached = dist < self.goal_radius
        reward = -dist + np.where(reached, self.goal_bonus, 0.0)
        return p2, reward, reached


class QuadraticBandit(Env):
    """One-step episodes from a fixed state; ``Q*(s, a) = -(a - a_star)^2``."""

    def __init__(self, a_star: float = 0.3, gamma: float = 0.99):
        super().__init__()
        if not -1.0 < a_star < 1.0:
            raise ValueError("a_star must lie in (-1, 1)")
        self.a_star = float(a_star)
        self.spec = EnvSpec("quadbandit", 1, 1, 1.0, 1, gamma)
        self.r_max = (1.0 + abs(self.a_star)) ** 2

    def initial_state(self, rng):
        return np.ones(1)

    def true_q(self, actions) -> np.ndarray:
        a = self.clip_action(np.asarray(actions, dtype=np.float64))
        return -np.sum((a - self.a_star) ** 2, axis=-1)

    def dynamics(self, states, actions):
        return states.copy(), self.true_q(actions), np.ones(states.shape[0], dtype=bool)


ENVIRONMENTS: dict[str, Callable[[], Env]] = {
    "pendulum": PendulumSwingUp,
    "pointgoal2d": PointGoal2D,
    "quadbandit": QuadraticBandit,
}


def make_env(name: str, **kwargs) -> Env:
    try:
        factory = ENVIRONMENTS[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return factory(**kwargs)


def horizon_cap(gamma: float, r_max: float, tol: float = MC_TAIL_TOLERANCE) -> int:
    """Smallest ``H >= 1`` with ``gamma**H * r_max < tol``."""
    if gamma == 0.0 or r_max < tol:
        return 1
    h = max(1, math.ceil(math.log(tol / r_max) / math.log(gamma)))
    while gamma ** h * r_max >= tol:
        h += 1
    return h


def _require_injection(env: Env):
    if not callable(getattr(env, "set_state", None)):
        raise CapabilityError(f"{type(env).__name__} does not support state injection")


def mc_true_q(env: Env, actor, start_state, start_action, gamma: float,
              horizon: int | None = None, seed: int | None = None) -> float:
    """Discounted return of ``start_action`` then the noise-free ``actor``.

    Rolls out on a private copy of ``env`` until a true terminal or the
    horizon; time-limit signals do not stop the rollout.  The bundled tasks
    are deterministic, so ``seed`` only reseeds the copy.
    """
    _require_injection(env)
    if horizon is None:
        horizon = horizon_cap(gamma, env.r_max)
    sim = copy.deepcopy(env)
    if seed is not None:
        sim._rng = np.random.default_rng(seed)
    sim.set_state(start_state)
    action = np.asarray(start_action, dtype=np.float64)
    ret = 0.0
    disc = 1.0
    for _ in range(horizon):
        s2, r, kind = sim.step(action)
        ret += disc * r
        if kind == Termination.TRUE_TERMINAL:
            break
        disc *= gamma
        if disc == 0.0:
            break
        action = np.asarray(actor(s2), dtype=np.float64)
    return ret


def mc_true_q_batch(env: Env, actor, states, actions, gamma: float,
                    horizon: int | None = None) -> np.ndarray:
    """Vectorised ``mc_true_q`` over rows of ``states`` / ``actions``."""
    _require_injection(env)
    if horizon is None:
        horizon = horizon_cap(gamma, env.r_max)
    s = np.array(states, dtype=np.float64, ndmin=2)
    a = np.array(actions, dtype=np.float64, ndmin=2)
    ret = np.zeros(s.shape[0])
    alive = np.ones(s.shape[0], dtype=bool)
    disc = 1.0
    for _ in range(horizon):
        s, r, term = env.dynamics(s, a)
        ret += np.where(alive, disc * r, 0.0)
        alive &= ~term
        disc *= gamma
        if not alive.any() or disc == 0.0:
            break
        a = np.asarray(actor(s), dtype=np.float64)
    return ret
