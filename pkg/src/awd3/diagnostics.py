"""Estimated-vs-true Q measurement, beta snapshots and CSV export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .envs import Env, mc_true_q_batch
from .replay import ReplayBuffer

BIAS_COLUMNS = ("step", "estimated_q_mean", "true_q_mean", "bias", "n_pairs")
BETA_COLUMNS = ("step", "beta")
CURVE_COLUMNS = ("step", "mean_return", "std_return")
TERMINAL_COLUMNS = ("step", "reward", "estimate", "abs_error", "beta")


@dataclass(frozen=True)
class BiasRecord:
    step: int
    estimated_q_mean: float
    true_q_mean: float
    bias: float
    n_pairs: int
    bias_stderr: float = math.nan
    rule: str = ""


@dataclass(frozen=True)
class BetaRecord:
    step: int
    beta: float


@dataclass(frozen=True)
class EvalRecord:
    step: int
    mean_return: float
    std_return: float


@dataclass(frozen=True)
class TerminalRecord:
    """Weighted target-critic estimate at a true terminal versus its reward."""
    step: int
    reward: float
    estimate: float
    abs_error: float
    beta: float


class OracleCritic:
    """Stand-in critic returning a known ``Q*`` plus shift and Gaussian noise.

    ``q_star`` maps ``(states, actions)`` to true values.  Each call draws
    fresh noise, so two instances with different seeds have independent
    errors.
    """

    def __init__(self, q_star, state_dim: int, noise_std: float = 0.0,
                 shift: float = 0.0, seed: int = 0):
        self.q_star = q_star
        self.state_dim = state_dim
        self.noise_std = noise_std
        self.shift = shift
        self.rng = np.random.default_rng(seed)

    def __call__(self, x):
        x = np.atleast_2d(x)
        s, a = x[:, :self.state_dim], x[:, self.state_dim:]
        q = np.asarray(self.q_star(s, a), dtype=np.float64) + self.shift
        if self.noise_std > 0:
            q = q + self.rng.normal(0.0, self.noise_std, size=q.shape)
        return q[:, None]


def bias_samples(agent, buffer: ReplayBuffer, env: Env, n_pairs: int, gamma: float,
                 seed: int):
    """Per-pair ``(estimated, true)`` values for ``n_pairs`` uniform draws."""
    rng = np.random.default_rng(seed)
    idx = buffer.sample_indices(n_pairs, rng)
    s, a = buffer.states[idx], buffer.actions[idx]
    est = agent.estimate_q(s, a)
    true = mc_true_q_batch(env, agent.policy, s, a, gamma)
    return est, true


def measure_bias(agent, buffer: ReplayBuffer, env: Env, n_pairs: int, gamma: float,
                 seed: int) -> BiasRecord:
    """Mean online-critic estimate versus Monte-Carlo return under the greedy policy.

    Does not touch agent parameters, beta or the agent's random streams.
    """
    est, true = bias_samples(agent, buffer, env, n_pairs, gamma, seed)
    diff = est - true
    se = float(np.std(diff, ddof=1) / math.sqrt(n_pairs)) if n_pairs > 1 else math.nan
    est_mean = float(np.mean(est))
    true_mean = float(np.mean(true))
    return BiasRecord(int(agent.t), est_mean, true_mean, est_mean - true_mean, int(n_pairs),
                      se, agent.estimate_rule)


def record_beta(agent, step: int) -> BetaRecord:
    return BetaRecord(int(step), float(agent.beta))


def format_value(v) -> str:
    # repr gives the shortest round-trip decimal and ignores locale
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path | str, columns: Sequence[str], rows: Iterable) -> Path:
    """Write dataclass records or dicts with a header and fixed column order."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            get = row.get if isinstance(row, dict) else (lambda k, r=row: getattr(r, k))
            w.writerow([format_value(get(c)) for c in columns])
    return path


def read_csv(path: Path | str) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_gnuplot(path: Path | str, columns: Sequence[str], rows: Iterable) -> Path:
    """Whitespace-separated data file with a ``#`` header line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            get = row.get if isinstance(row, dict) else (lambda k, r=row: getattr(r, k))
            fh.write(" ".join(format_value(get(c)) for c in columns) + "\n")
    return path
