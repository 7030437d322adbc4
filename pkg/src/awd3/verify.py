"""In-package property suite behind ``awd3 verify``.

Checks are grouped by module.  ``faults`` lets the CLI inject a known
defect (currently ``"gradient"``) to prove the suite can fail.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import agents, bias_stats, diagnostics, envs, nn, replay

SUITES = ("bias_stats", "nn", "replay", "envs", "agents", "diagnostics")
FAULTS = ("gradient",)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float


_REGISTRY: list[tuple[str, str, Callable]] = []


def check(suite: str, name: str):
    def deco(fn):
        _REGISTRY.append((suite, name, fn))
        return fn
    return deco


# --- bias_stats ------------------------------------------------------------

@check("bias_stats", "iid_min_equals_minus_sigma_over_sqrt_pi")
def _iid_theorem(faults):
    worst = max(abs(bias_stats.expected_min(bias_stats.GaussianErrorModel.iid(0.0, s))
                    + s / math.sqrt(math.pi)) for s in (0.1, 1.0, 10.0))
    return worst <= 1e-12, f"max abs error {worst:.2e}"


@check("bias_stats", "closed_form_matches_monte_carlo")
def _oracle_grid(faults):
    bad = []
    for i, m in enumerate(bias_stats.default_scan_grid()):
        mean, se = bias_stats.mc_min_oracle(m, 200_000, seed=7000 + i)
        z = abs(bias_stats.expected_min(m) - mean) / se
        if z > 3.0:
            bad.append((m, z))
    return not bad, f"{len(bad)} grid points beyond 3 standard errors"


@check("bias_stats", "optimal_beta_zeroes_weighted_bias")
def _beta_opt(faults):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        m = bias_stats.GaussianErrorModel.iid(rng.uniform(-2, 2), rng.uniform(0.1, 3),
                                              rng.uniform(-0.9, 0.9))
        worst = max(worst, abs(bias_stats.expected_weighted_bias(m, bias_stats.optimal_beta(m))))
    return worst <= 1e-10, f"max |bias| {worst:.2e}"


@check("bias_stats", "symmetry_and_translation")
def _sym(faults):
    m = bias_stats.GaussianErrorModel(0.3, -0.2, 1.0, 0.5, 0.4)
    e = bias_stats.expected_min(m)
    d_sym = abs(e - bias_stats.expected_min(m.swapped()))
    d_shift = abs(bias_stats.expected_min(m.shifted(2.5)) - (e + 2.5))
    return max(d_sym, d_shift) <= 1e-12, f"swap {d_sym:.1e}, shift {d_shift:.1e}"


# --- nn ----------------------------------------------------------------------

def _grad_check(net, in_dim, faults, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, in_dim))
    g = rng.normal(size=(8, net.out_dim))
    analytic, _ = nn.backward(net, x, g)
    if "gradient" in faults:
        analytic = analytic.copy()
        analytic[::7] *= 1.01
    rep = nn.gradient_check(net, x, g, n_probes=150, rng=seed + 1, analytic=analytic)
    return rep.max_rel_error < 1e-4, f"max rel error {rep.max_rel_error:.2e} over {rep.n_probes} probes"


@check("nn", "critic_gradient_finite_difference")
def _critic_grad(faults):
    net = nn.init_xavier([4, 64, 64, 1], 3)
    return _grad_check(net, 4, faults, 21)


@check("nn", "actor_gradient_finite_difference")
def _actor_grad(faults):
    net = nn.init_xavier([3, 64, 64, 2], 4, "tanh", 2.0)
    return _grad_check(net, 3, faults, 22)


@check("nn", "soft_update_is_affine")
def _soft_affine(faults):
    a, b = nn.init_xavier([3, 8, 1], 1), nn.init_xavier([3, 8, 1], 2)
    t1, t2 = a.copy(), a.copy()
    nn.soft_update(t1, b, 0.1)
    nn.soft_update(t1, b, 0.3)
    nn.soft_update(t2, b, 1 - 0.9 * 0.7)
    err = float(np.max(np.abs(t1.params - t2.params)))
    return err <= 1e-12, f"max diff {err:.1e}"


@check("nn", "adam_descends_quadratic_bowl")
def _adam_bowl(faults):
    w = np.array([1.0])
    st = nn.AdamState.zeros_like(w, lr=0.01)
    prev = abs(w[0])
    monotone = True
    for _ in range(100):
        nn.adam_step(w, 2 * w, st)
        monotone &= abs(w[0]) < prev
        prev = abs(w[0])
    return monotone and prev < 0.5, f"|w| = {prev:.3f}"


# --- replay ------------------------------------------------------------------

@check("replay", "fifo_eviction_and_terminal_filter")
def _replay(faults):
    buf = replay.ReplayBuffer(3, 1, 1)
    T = replay.Termination
    kinds = [T.NONE, T.TRUE_TERMINAL, T.TIME_LIMIT, T.NONE]
    for i, k in enumerate(kinds):
        buf.push(replay.Transition(np.array([i]), np.zeros(1), float(i), np.zeros(1), k))
    order = [float(t.state[0]) for t in buf.ordered()]
    ok = order == [1.0, 2.0, 3.0] and buf.last_terminal.reward == 1.0
    return ok, f"order {order}, last terminal reward {buf.last_terminal.reward}"


# --- envs --------------------------------------------------------------------

@check("envs", "termination_semantics")
def _env_kinds(faults):
    rng = np.random.default_rng(5)
    pend = envs.PendulumSwingUp()
    pend.reset(seed=1)
    kinds = set()
    for _ in range(450):
        _, _, k = pend.step(rng.uniform(-2, 2, 1))
        kinds.add(k)
    bandit = envs.QuadraticBandit()
    bandit.reset(seed=1)
    _, _, kb = bandit.step(np.array([0.2]))
    ok = replay.Termination.TRUE_TERMINAL not in kinds and kb == replay.Termination.TRUE_TERMINAL
    return ok, f"pendulum kinds {sorted(int(k) for k in kinds)}, bandit {kb.name}"


@check("envs", "bandit_mc_q_is_closed_form")
def _bandit_q(faults):
    env = envs.QuadraticBandit()
    acts = np.linspace(-1, 1, 21)
    err = max(abs(envs.mc_true_q(env, lambda s: np.zeros(1), np.ones(1), [a], 0.99)
                  + (a - env.a_star) ** 2) for a in acts)
    return err == 0.0, f"max error {err:.1e}"


# --- agents ------------------------------------------------------------------

@check("agents", "label_identities")
def _labels(faults):
    rng = np.random.default_rng(9)
    r, g, q1, q2 = rng.normal(size=1000), rng.uniform(0, 1, 1000), rng.normal(size=1000), rng.normal(size=1000)
    e1 = np.max(np.abs(agents.target_label_wd3(r, g, q1, q2, 1.0) - agents.target_label_td3(r, g, q1, q2)))
    e0 = np.max(np.abs(agents.target_label_wd3(r, g, q1, q2, 0.0) - (r + g * (q1 + q2) / 2)))
    return max(e1, e0) <= 1e-12, f"beta=1 {e1:.1e}, beta=0 {e0:.1e}"


@check("agents", "beta_ignores_time_limits")
def _beta_filter(faults):
    cfg = agents.AgentConfig("awd3", total_steps=600, hidden_sizes=(16, 16), batch_size=32,
                             beta_warmup_steps=0, exploration_phase_steps=50, eval_episodes=0,
                             bias_pairs=0, beta_lr=1e-2)
    seen = set()
    agents.train(cfg, envs.PendulumSwingUp(), 0,
                 observer=lambda ag, info: seen.add(info.beta))
    ag = agents.Agent(cfg, envs.PendulumSwingUp().spec, 0)
    try:
        ag.beta_update(replay.Transition(np.zeros(3), np.zeros(1), 0.0, np.zeros(3),
                                         replay.Termination.TIME_LIMIT))
        rejected = False
    except agents.ContractViolation:
        rejected = True
    return seen == {0.5} and rejected, f"distinct betas {len(seen)}, time-limit rejected {rejected}"


# --- diagnostics ---------------------------------------------------------------

@check("diagnostics", "min_rule_underestimates")
def _bias_sign(faults):
    env = envs.QuadraticBandit()
    cfg = agents.AgentConfig("td3", total_steps=1000, hidden_sizes=(8, 8))
    ag = agents.Agent(cfg, env.spec, 0)
    sigma = 0.3
    q_star = lambda s, a: env.true_q(a)
    ag.critics = [diagnostics.OracleCritic(q_star, 1, sigma, seed=k) for k in (1, 2)]
    buf = replay.ReplayBuffer(500, 1, 1)
    rng = np.random.default_rng(3)
    for a in rng.uniform(-1, 1, 500):
        buf.push(replay.Transition(np.ones(1), np.array([a]), float(env.true_q([a])),
                                   np.ones(1), replay.Termination.TRUE_TERMINAL))
    rec = diagnostics.measure_bias(ag, buf, env, 10_000, 0.99, seed=4)
    z = abs(rec.bias + sigma / math.sqrt(math.pi)) / rec.bias_stderr
    return z <= 3.0, f"bias {rec.bias:.4f} vs {-sigma / math.sqrt(math.pi):.4f} ({z:.2f} se)"


def run(filter: str | None = None, faults=()) -> list[CheckResult]:
    faults = set(faults)
    results = []
    for suite, name, fn in _REGISTRY:
        if filter and filter not in (suite, name):
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn(faults)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(suite, name, bool(ok), detail, time.perf_counter() - t0))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max((len(r.suite) + len(r.name) + 1 for r in results), default=10)
    lines = [f"{'check':<{width}}  result  detail"]
    for r in results:
        lines.append(f"{r.suite + '.' + r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.detail}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} checks passed")
    return "\n".join(lines)
