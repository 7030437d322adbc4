"""DDPG / TD3 / WD3 / AWD3 / TCD3 agents and the shared training loop.

All algorithms share the same skeleton: an exploration phase of uniform
random actions, then one critic step per environment step and delayed
actor + target updates.  They differ in how target critics are combined
into the bootstrap value.  AWD3 additionally adapts the min/average weight
``beta`` from the error of the weighted target-critic estimate at genuine
terminal transitions, whose true value is the observed reward.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics
from .diagnostics import BetaRecord, BiasRecord, EvalRecord, TerminalRecord
from .envs import Env, EnvSpec
from .nn import AdamState, Mlp, adam_step, init_xavier, soft_update
from .replay import Batch, ReplayBuffer, Termination, Transition

ALGORITHMS = ("ddpg", "td3", "wd3", "awd3", "tcd3")
BETA_MODES = ("last_terminal", "batch")
N_CRITICS = {"ddpg": 1, "td3": 2, "wd3": 2, "awd3": 2, "tcd3": 3}


class ConfigError(ValueError):
    pass


class ContractViolation(ValueError):
    pass


@dataclass
class AgentConfig:
    """Hyper-parameters.  ``None`` fields are resolved from ``total_steps`` / the env.

    Noise scales are fractions of the environment's action bound.
    """

    algorithm: str = "awd3"
    gamma: float | None = None
    tau: float = 5e-3
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    batch_size: int = 100
    policy_delay: int = 2
    exploration_noise: float = 0.1
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    beta_init: float = 0.5
    beta_lr: float = 1e-4
    beta_min: float = 0.0
    beta_max: float = 2.5
    beta_warmup_steps: int | None = None
    exploration_phase_steps: int | None = None
    total_steps: int = 100_000
    eval_interval: int | None = None
    eval_episodes: int = 10
    beta_update_mode: str | None = None
    beta_batch_size: int = 100
    hidden_sizes: tuple[int, ...] = (256, 256)
    buffer_capacity: int = 1_000_000
    bias_interval: int | None = None
    bias_pairs: int = 1000

    def resolved(self, env_spec: EnvSpec | None = None) -> "AgentConfig":
        """Copy with derived defaults filled in, validated."""
        cfg = dataclasses.replace(self, hidden_sizes=tuple(int(h) for h in self.hidden_sizes))
        T = cfg.total_steps
        if cfg.gamma is None:
            cfg.gamma = env_spec.gamma if env_spec is not None else 0.99
        if cfg.beta_warmup_steps is None:
            cfg.beta_warmup_steps = T // 10
        if cfg.exploration_phase_steps is None:
            cfg.exploration_phase_steps = max(cfg.batch_size, int(0.025 * T))
        if cfg.eval_interval is None:
            cfg.eval_interval = max(1, T // 200)
        if cfg.bias_interval is None:
            cfg.bias_interval = max(1, T // 20)
        if cfg.beta_update_mode is None and cfg.algorithm == "awd3":
            cfg.beta_update_mode = "last_terminal"
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if self.policy_delay < 1 or self.batch_size < 1 or self.eval_episodes < 0:
            raise ConfigError("policy_delay and batch_size must be >= 1")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not self.beta_min <= self.beta_max:
            raise ConfigError("beta_min must not exceed beta_max")
        if not self.beta_min <= self.beta_init <= self.beta_max:
            raise ConfigError(f"beta_init {self.beta_init} outside "
                              f"[{self.beta_min}, {self.beta_max}]")
        if self.beta_update_mode is not None:
            if self.algorithm != "awd3":
                raise ConfigError(f"beta adaptation requested for {self.algorithm}; "
                                  "only awd3 adapts beta")
            if self.beta_update_mode not in BETA_MODES:
                raise ConfigError(f"unknown beta_update_mode {self.beta_update_mode!r}")
        for name in ("beta_warmup_steps", "exploration_phase_steps"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("eval_interval", "bias_interval"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.exploration_noise < 0 or self.target_noise < 0 or self.target_noise_clip < 0:
            raise ConfigError("noise scales must be non-negative")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden sizes must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        if "hidden_sizes" in d:
            d["hidden_sizes"] = tuple(d["hidden_sizes"])
        return cls(**d)


# --- target-label rules (vectorised; ``done`` marks true terminals) ---------

def _bootstrap(r, gamma, value, done):
    r = np.asarray(r, dtype=np.float64)
    y = r + gamma * np.asarray(value, dtype=np.float64)
    if done is None:
        return y
    # exactly r on true terminals; time-limit ends bootstrap like any other step
    return np.where(done, r, y)


def min_combination(q1, q2):
    return np.minimum(q1, q2)


def weighted_combination(q1, q2, beta):
    """``beta * min + (1 - beta) * average``, written as ``avg - beta * (avg - min)``."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    avg = 0.5 * (q1 + q2)
    return avg - beta * (avg - np.minimum(q1, q2))


def triplet_combination(q1, q2, q3):
    return np.minimum(np.maximum(q1, q2), q3)


def target_label_ddpg(r, gamma, q_target, done=None):
    return _bootstrap(r, gamma, q_target, done)


def target_label_td3(r, gamma, q1, q2, done=None):
    return _bootstrap(r, gamma, min_combination(q1, q2), done)


def target_label_wd3(r, gamma, q1, q2, beta, done=None):
    return _bootstrap(r, gamma, weighted_combination(q1, q2, beta), done)


def target_label_tcd3(r, gamma, q1, q2, q3, done=None):
    return _bootstrap(r, gamma, triplet_combination(q1, q2, q3), done)


def smoothed_target_action(actor_target, next_states, rng: np.random.Generator,
                           noise_std: float, noise_clip: float, action_bound: float):
    """Target action plus clipped Gaussian smoothing noise, clipped to the action box."""
    a = np.asarray(actor_target(next_states), dtype=np.float64)
    if noise_std > 0:
        eps = np.clip(rng.normal(0.0, noise_std, size=a.shape), -noise_clip, noise_clip)
        a = a + eps
    return np.clip(a, -action_bound, action_bound)


# --- agent -----------------------------------------------------------------

STREAMS = ("init", "explore", "target_noise", "sample", "beta", "env", "eval", "bias")


def _make_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(STREAMS, children)}


class Agent:
    """Networks, optimiser states, beta and random streams of one run."""

    def __init__(self, config: AgentConfig, env_spec: EnvSpec, seed: int = 0):
        self.config = cfg = config.resolved(env_spec)
        self.env_spec = env_spec
        self.seed = seed
        self.rngs = _make_streams(seed)
        sd, ad, bound = env_spec.state_dim, env_spec.action_dim, env_spec.action_bound
        hidden = list(cfg.hidden_sizes)
        init = self.rngs["init"]
        self.actor = init_xavier([sd, *hidden, ad], init, "tanh", bound)
        self.critics: list[Mlp] = [init_xavier([sd + ad, *hidden, 1], init)
                                   for _ in range(N_CRITICS[cfg.algorithm])]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = AdamState.zeros_like(self.actor.params, lr=cfg.actor_lr)
        self.critic_opts = [AdamState.zeros_like(c.params, lr=cfg.critic_lr) for c in self.critics]
        self.beta = float(cfg.beta_init)
        self.t = 0
        self.last_labels: np.ndarray | None = None

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    @property
    def gamma(self) -> float:
        return self.config.gamma

    @property
    def estimate_rule(self) -> str:
        return {"ddpg": "single", "td3": "min", "wd3": "weighted",
                "awd3": "weighted", "tcd3": "triplet"}[self.algorithm]

    def policy(self, states):
        """Noise-free action(s)."""
        return self.actor(states)

    def act(self, state, explore: bool = True) -> np.ndarray:
        a = self.actor(state)
        bound = self.env_spec.action_bound
        if explore and self.config.exploration_noise > 0:
            a = a + self.rngs["explore"].normal(0.0, self.config.exploration_noise * bound,
                                                size=a.shape)
        return np.clip(a, -bound, bound)

    def random_action(self) -> np.ndarray:
        b = self.env_spec.action_bound
        return self.rngs["explore"].uniform(-b, b, size=self.env_spec.action_dim)

    def combine(self, qs, beta: float | None = None):
        """Apply this algorithm's combination rule to per-critic values."""
        if beta is None:
            beta = self.beta
        rule = self.estimate_rule
        if rule == "single":
            return np.asarray(qs[0], dtype=np.float64)
        if rule == "min":
            return min_combination(qs[0], qs[1])
        if rule == "weighted":
            return weighted_combination(qs[0], qs[1], beta)
        return triplet_combination(qs[0], qs[1], qs[2])

    @staticmethod
    def _critic_values(critics, states, actions):
        x = np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)
        return [np.asarray(c(x))[:, 0] for c in critics]

    def estimate_q(self, states, actions, target: bool = False) -> np.ndarray:
        critics = self.critic_targets if target else self.critics
        return self.combine(self._critic_values(critics, states, actions))

    def terminal_estimate(self, states, actions) -> np.ndarray:
        """Target-critic estimate at ``(s, a)`` that beta adaptation compares with ``r``."""
        return self.estimate_q(states, actions, target=True)

    def compute_labels(self, batch: Batch) -> np.ndarray:
        bound = self.env_spec.action_bound
        if self.algorithm == "ddpg":
            a2 = np.clip(self.actor_target(batch.next_states), -bound, bound)
        else:
            a2 = smoothed_target_action(self.actor_target, batch.next_states,
                                        self.rngs["target_noise"],
                                        self.config.target_noise * bound,
                                        self.config.target_noise_clip * bound, bound)
        qs = self._critic_values(self.critic_targets, batch.next_states, a2)
        g, done = self.gamma, batch.done
        if self.algorithm == "ddpg":
            return target_label_ddpg(batch.rewards, g, qs[0], done)
        if self.algorithm == "td3":
            return target_label_td3(batch.rewards, g, qs[0], qs[1], done)
        if self.algorithm == "tcd3":
            return target_label_tcd3(batch.rewards, g, qs[0], qs[1], qs[2], done)
        return target_label_wd3(batch.rewards, g, qs[0], qs[1], self.beta, done)

    def critic_update(self, batch: Batch) -> float:
        """One Adam step per critic towards a single shared label; returns the pre-step loss."""
        y = self.compute_labels(batch)
        self.last_labels = y
        x = np.concatenate([batch.states, batch.actions], axis=1)
        n = len(batch)
        total = 0.0
        for critic, opt in zip(self.critics, self.critic_opts):
            q, cache = critic.forward_cached(x)
            diff = q[:, 0] - y
            total += float(np.mean(diff * diff))
            grad, _ = critic.backward_cached(cache, (2.0 / n) * diff[:, None])
            adam_step(critic.params, grad, opt)
        return total

    def actor_gradient(self, states: np.ndarray) -> np.ndarray:
        """Gradient of ``-mean Q_1(s, pi(s))`` with respect to the actor parameters."""
        states = np.atleast_2d(states)
        n, sd = states.shape
        a, cache_a = self.actor.forward_cached(states)
        q, cache_q = self.critics[0].forward_cached(np.concatenate([states, a], axis=1))
        _, g_in = self.critics[0].backward_cached(cache_q, np.full((n, 1), -1.0 / n),
                                                  param_grads=False)
        grad, _ = self.actor.backward_cached(cache_a, g_in[:, sd:])
        return grad

    def actor_update(self, batch: Batch) -> None:
        grad = self.actor_gradient(batch.states)
        adam_step(self.actor.params, grad, self.actor_opt)

    def soft_update_targets(self) -> None:
        tau = self.config.tau
        for tgt, src in zip(self.critic_targets, self.critics):
            soft_update(tgt, src, tau)
        soft_update(self.actor_target, self.actor, tau)

    def _clip_beta(self, beta: float) -> float:
        return float(min(max(beta, self.config.beta_min), self.config.beta_max))

    def _check_beta_mechanism(self):
        if self.algorithm != "awd3":
            raise ConfigError(f"beta is fixed for {self.algorithm}")

    def beta_update(self, terminal: Transition) -> float:
        """``beta <- clip(beta - mu * (r - y_tilde))`` from one true terminal."""
        self._check_beta_mechanism()
        if terminal.termination != Termination.TRUE_TERMINAL:
            raise ContractViolation("beta may only be updated from true terminals, "
                                    f"got {terminal.termination.name}")
        y_tilde = float(self.terminal_estimate(terminal.state, terminal.action)[0])
        self.beta = self._clip_beta(self.beta - self.config.beta_lr * (terminal.reward - y_tilde))
        return self.beta

    def beta_update_batch(self, terminals) -> float:
        """Batch variant: mean error over a set of true terminals."""
        self._check_beta_mechanism()
        if isinstance(terminals, Batch):
            batch = terminals
        else:
            terminals = list(terminals)
            if any(t.termination != Termination.TRUE_TERMINAL for t in terminals):
                raise ContractViolation("beta batch contains non-terminal transitions")
            batch = Batch(np.array([t.state for t in terminals]),
                          np.array([t.action for t in terminals]),
                          np.array([t.reward for t in terminals]),
                          np.array([t.next_state for t in terminals]),
                          np.array([int(t.termination) for t in terminals]))
        if len(batch) == 0:
            raise ContractViolation("empty beta batch")
        if not np.all(batch.done):
            raise ContractViolation("beta batch contains non-terminal transitions")
        y_tilde = self.terminal_estimate(batch.states, batch.actions)
        err = float(np.mean(batch.rewards - y_tilde))
        self.beta = self._clip_beta(self.beta - self.config.beta_lr * err)
        return self.beta


# --- training loop ---------------------------------------------------------

@dataclass
class StepInfo:
    """Per-step instrumentation passed to a ``train`` observer."""
    t: int
    termination: Termination
    learning: bool
    actor_updated: bool
    beta: float
    beta_updated: bool
    batch: Batch | None = None
    labels: np.ndarray | None = None


@dataclass
class RunResult:
    config: AgentConfig
    env_name: str
    seed: int
    agent: Agent
    learning_curve: list[EvalRecord] = field(default_factory=list)
    beta_trace: list[BetaRecord] = field(default_factory=list)
    bias: list[BiasRecord] = field(default_factory=list)
    terminal_errors: list[TerminalRecord] = field(default_factory=list)
    buffer: ReplayBuffer | None = None

    @property
    def final_return(self) -> float:
        return self.learning_curve[-1].mean_return

    @property
    def max_average_return(self) -> float:
        return max(r.mean_return for r in self.learning_curve)

    def mean_terminal_error(self, last: int = 100) -> float:
        errs = [r.abs_error for r in self.terminal_errors[-last:]]
        return float(np.mean(errs)) if errs else math.nan


def evaluate(agent: Agent, env: Env, episodes: int, seed: int | None = None) -> list[float]:
    """Undiscounted returns of noise-free episodes; nothing is stored anywhere.

    Start states come from ``env.reset``; the episodes are then advanced
    together through the batched dynamics, which is exact because the bundled
    tasks are deterministic given their start state.
    """
    if episodes <= 0:
        return []
    starts = [env.reset(seed=seed if k == 0 else None) for k in range(episodes)]
    s = np.array(starts)
    totals = np.zeros(episodes)
    alive = np.ones(episodes, dtype=bool)
    for _ in range(env.spec.time_limit):
        a = agent.act(s, explore=False)
        s, r, term = env.dynamics(s, a)
        totals += np.where(alive, r, 0.0)
        alive &= ~term
        if not alive.any():
            break
    return totals.tolist()


def train(config: AgentConfig, env: Env, seed: int,
          observer: Callable[[Agent, StepInfo], None] | None = None) -> RunResult:
    """Run one seeded experiment and collect its artifacts."""
    agent = Agent(config, env.spec, seed)
    cfg = agent.config
    rngs = agent.rngs
    spec = env.spec
    T = cfg.total_steps
    buffer = ReplayBuffer(min(cfg.buffer_capacity, T), spec.state_dim, spec.action_dim)
    beta_buffer = None
    if cfg.beta_update_mode == "batch":
        beta_buffer = ReplayBuffer(min(cfg.buffer_capacity, T), spec.state_dim, spec.action_dim)
    eval_env = copy.deepcopy(env)
    eval_seed = int(rngs["eval"].integers(2 ** 31))
    result = RunResult(cfg, spec.name, seed, agent, buffer=buffer)
    adaptive = cfg.algorithm == "awd3"

    def checkpoint_stats(step):
        rets = evaluate(agent, eval_env, cfg.eval_episodes, seed=eval_seed + step)
        if rets:
            result.learning_curve.append(EvalRecord(step, float(np.mean(rets)), float(np.std(rets))))
        if adaptive:
            result.beta_trace.append(diagnostics.record_beta(agent, step))

    state = env.reset(seed=int(rngs["env"].integers(2 ** 31)))
    checkpoint_stats(0)
    for t in range(T):
        agent.t = t
        learning = t >= cfg.exploration_phase_steps
        action = agent.act(state) if learning else agent.random_action()
        next_state, reward, kind = env.step(action)
        transition = Transition(state, action, reward, next_state, kind)
        buffer.push(transition)
        if beta_buffer is not None and kind == Termination.TRUE_TERMINAL:
            beta_buffer.push(transition)

        batch = None
        actor_updated = beta_updated = False
        if learning:
            batch = buffer.sample_batch(cfg.batch_size, rngs["sample"])
            agent.critic_update(batch)
            if t % cfg.policy_delay == 0:
                agent.actor_update(batch)
                agent.soft_update_targets()
                actor_updated = True
            if kind == Termination.TRUE_TERMINAL:
                last = buffer.last_terminal
                y_tilde = float(agent.terminal_estimate(last.state, last.action)[0])
                result.terminal_errors.append(TerminalRecord(
                    t, last.reward, y_tilde, abs(last.reward - y_tilde), agent.beta))
                if adaptive and t >= cfg.beta_warmup_steps:
                    if beta_buffer is None:
                        agent.beta_update(last)
                    else:
                        agent.beta_update_batch(
                            beta_buffer.sample_batch(cfg.beta_batch_size, rngs["beta"]))
                    beta_updated = True

        if observer is not None:
            observer(agent, StepInfo(t, kind, learning, actor_updated, agent.beta, beta_updated,
                                     batch, agent.last_labels if learning else None))

        state = next_state if kind == Termination.NONE else env.reset()
        step = t + 1
        agent.t = step
        if step % cfg.eval_interval == 0:
            checkpoint_stats(step)
        if cfg.bias_pairs > 0 and step % cfg.bias_interval == 0 and step > cfg.exploration_phase_steps:
            result.bias.append(diagnostics.measure_bias(
                agent, buffer, eval_env, cfg.bias_pairs, cfg.gamma,
                seed=int(rngs["bias"].integers(2 ** 31))))
    return result
