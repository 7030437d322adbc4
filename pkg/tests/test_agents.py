import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from awd3 import agents, envs
from awd3.agents import AgentConfig, ConfigError, ContractViolation
from awd3.replay import Batch, Termination, Transition

vec = arrays(np.float64, 32, elements=st.floats(-100, 100))


def small(algo="awd3", **kw):
    base = dict(hidden_sizes=(16, 16), batch_size=32, total_steps=400, eval_episodes=2,
                bias_pairs=0)
    return AgentConfig(algo, **{**base, **kw})


def _batch(n, terminal_every=3, seed=0):
    rng = np.random.default_rng(seed)
    kinds = np.array([int(Termination.TRUE_TERMINAL) if i % terminal_every == 0 else 0
                      for i in range(n)])
    return Batch(rng.normal(size=(n, 1)), rng.uniform(-1, 1, (n, 1)), rng.normal(size=n),
                 rng.normal(size=(n, 1)), kinds)


class TestLabels:
    @settings(max_examples=100, deadline=None)
    @given(vec, vec, vec, st.floats(0.0, 0.999))
    def test_wd3_endpoints(self, r, q1, q2, g):
        np.testing.assert_allclose(agents.target_label_wd3(r, g, q1, q2, 1.0),
                                   agents.target_label_td3(r, g, q1, q2), atol=1e-12)
        np.testing.assert_allclose(agents.target_label_wd3(r, g, q1, q2, 0.0),
                                   r + g * (q1 + q2) / 2, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(vec, vec, vec, vec)
    def test_tcd3_brute_force(self, r, q1, q2, q3):
        expected = [ri + 0.9 * min(max(a, b), c) for ri, a, b, c in zip(r, q1, q2, q3)]
        np.testing.assert_allclose(agents.target_label_tcd3(r, 0.9, q1, q2, q3), expected,
                                   rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(vec, st.floats(0, 2.5))
    def test_equal_critics_give_exact_value(self, q, beta):
        assert np.array_equal(agents.weighted_combination(q, q, beta), q)

    def test_true_terminal_label_is_reward_exactly(self):
        r = np.array([0.1, 0.2, 0.3])
        done = np.array([True, False, True])
        y = agents.target_label_wd3(r, 0.99, np.full(3, 1e6), np.full(3, -1e6), 0.7, done)
        assert y[0] == 0.1 and y[2] == 0.3
        assert y[1] != 0.2

    def test_weighted_is_monotone_in_beta(self):
        q1, q2 = np.array([1.0]), np.array([3.0])
        vals = [agents.weighted_combination(q1, q2, b)[0] for b in (0, 0.5, 1, 2)]
        assert vals == sorted(vals, reverse=True)
        assert vals == [2.0, 1.5, 1.0, 0.0]

    def test_smoothing_noise_is_clipped(self):
        actor = lambda s: np.zeros((s.shape[0], 1))
        a = agents.smoothed_target_action(actor, np.zeros((10_000, 1)), np.random.default_rng(0),
                                          0.4, 0.5, 1.0)
        assert np.abs(a).max() <= 0.5
        # closed-form std of N(0, 0.4^2) clipped at +-0.5
        assert a.std() == pytest.approx(0.32551086787452305, abs=0.005)


class TestConfig:
    def test_resolved_defaults(self):
        cfg = AgentConfig(total_steps=20_000).resolved(envs.QuadraticBandit().spec)
        assert cfg.beta_warmup_steps == 2_000
        assert cfg.exploration_phase_steps == 500
        assert cfg.eval_interval == 100
        assert cfg.bias_interval == 1_000
        assert cfg.beta_update_mode == "last_terminal"
        assert cfg.gamma == 0.99

    @pytest.mark.parametrize("kw", [
        dict(algorithm="sac"), dict(beta_init=3.0), dict(tau=0.0), dict(policy_delay=0),
        dict(algorithm="td3", beta_update_mode="batch"), dict(beta_update_mode="median"),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            AgentConfig(**kw).resolved()

    def test_dict_round_trip(self):
        cfg = small(beta_lr=1e-3)
        assert AgentConfig.from_dict(cfg.to_dict()) == cfg


class TestAgent:
    spec = envs.QuadraticBandit().spec

    @pytest.mark.parametrize("algo,n", [("ddpg", 1), ("td3", 2), ("wd3", 2), ("awd3", 2),
                                        ("tcd3", 3)])
    def test_critic_count(self, algo, n):
        assert len(agents.Agent(small(algo), self.spec, 0).critics) == n

    def test_targets_start_equal(self):
        ag = agents.Agent(small(), self.spec, 0)
        assert np.array_equal(ag.actor.params, ag.actor_target.params)
        assert not np.array_equal(ag.critics[0].params, ag.critics[1].params)

    def test_same_seed_same_init(self):
        a, b = agents.Agent(small(), self.spec, 3), agents.Agent(small(), self.spec, 3)
        assert np.array_equal(a.critics[1].params, b.critics[1].params)

    def test_actions_within_bound(self):
        ag = agents.Agent(small(), envs.PointGoal2D().spec, 0)
        acts = np.array([ag.act(np.zeros(2)) for _ in range(200)])
        assert np.abs(acts).max() <= 0.1

    def test_labels_equal_reward_on_terminals(self):
        ag = agents.Agent(small(), self.spec, 0)
        b = _batch(30)
        y = ag.compute_labels(b)
        assert np.array_equal(y[b.done], b.rewards[b.done])

    def test_one_shared_label_per_update(self):
        ag = agents.Agent(small("td3"), self.spec, 0)
        before = [c.params.copy() for c in ag.critics]
        loss = ag.critic_update(_batch(32, terminal_every=1))
        assert loss > 0
        assert all(not np.array_equal(p, c.params) for p, c in zip(before, ag.critics))
        np.testing.assert_array_equal(ag.last_labels, _batch(32, terminal_every=1).rewards)

    def test_actor_gradient_finite_difference(self):
        ag = agents.Agent(small("td3"), envs.PendulumSwingUp().spec, 1)
        s = np.random.default_rng(0).normal(size=(5, 3))
        grad = ag.actor_gradient(s)

        def objective():
            a = ag.actor(s)
            return -float(np.mean(ag.critics[0](np.concatenate([s, a], axis=1))))

        idx = np.random.default_rng(1).choice(ag.actor.n_params, 40, replace=False)
        for i in idx:
            old = ag.actor.params[i]
            ag.actor.params[i] = old + 1e-5
            fp = objective()
            ag.actor.params[i] = old - 1e-5
            fm = objective()
            ag.actor.params[i] = old
            num = (fp - fm) / 2e-5
            assert abs(num - grad[i]) <= 1e-4 * max(abs(num), abs(grad[i]), 1e-6)


class TestBetaUpdate:
    spec = envs.QuadraticBandit().spec

    def _terminal(self, r, a=0.0):
        return Transition(np.ones(1), np.array([a]), r, np.ones(1), Termination.TRUE_TERMINAL)

    def test_direction(self):
        ag = agents.Agent(small(beta_lr=0.1), self.spec, 0)
        y = float(ag.terminal_estimate(np.ones(1), np.zeros(1))[0])
        ag.beta_update(self._terminal(y + 1.0))  # underestimate: less pessimism
        assert ag.beta == pytest.approx(0.4)
        # the weighted estimate itself depends on beta
        y = float(ag.terminal_estimate(np.ones(1), np.zeros(1))[0])
        ag.beta_update(self._terminal(y - 2.0))
        assert ag.beta == pytest.approx(0.6)

    def test_uses_target_critics(self):
        ag = agents.Agent(small(beta_lr=1.0), self.spec, 0)
        ag.critics[0].params += 5.0
        y = float(agents.weighted_combination(
            *[c(np.array([[1.0, 0.0]]))[:, 0] for c in ag.critic_targets], 0.5)[0])
        ag.beta_update(self._terminal(y + 0.1))
        assert ag.beta == pytest.approx(0.4)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1e6, 1e6))
    def test_clipped_to_range(self, r):
        ag = agents.Agent(small(beta_lr=1.0), self.spec, 0)
        ag.beta_update(self._terminal(r))
        assert 0.0 <= ag.beta <= 2.5

    def test_rejects_time_limit(self):
        ag = agents.Agent(small(), self.spec, 0)
        t = Transition(np.ones(1), np.zeros(1), 0.0, np.ones(1), Termination.TIME_LIMIT)
        with pytest.raises(ContractViolation):
            ag.beta_update(t)
        with pytest.raises(ContractViolation):
            ag.beta_update_batch([t])

    def test_rejects_fixed_beta_algorithms(self):
        ag = agents.Agent(small("wd3"), self.spec, 0)
        with pytest.raises(ConfigError):
            ag.beta_update(self._terminal(0.0))

    def test_batch_mode_is_mean_error(self):
        ag = agents.Agent(small(beta_lr=0.01), self.spec, 0)
        ts = [self._terminal(r, a) for r, a in [(0.5, 0.1), (-1.0, -0.3), (2.0, 0.9)]]
        y = ag.terminal_estimate(np.ones((3, 1)), np.array([[0.1], [-0.3], [0.9]]))
        expected = 0.5 - 0.01 * np.mean(np.array([0.5, -1.0, 2.0]) - y)
        assert ag.beta_update_batch(ts) == pytest.approx(expected)


class TestTrain:
    def test_deterministic(self):
        a = agents.train(small("awd3"), envs.QuadraticBandit(), 5)
        b = agents.train(small("awd3"), envs.QuadraticBandit(), 5)
        assert a.learning_curve == b.learning_curve
        assert a.terminal_errors == b.terminal_errors
        assert np.array_equal(a.agent.actor.params, b.agent.actor.params)

    def test_seeds_differ(self):
        a = agents.train(small("td3"), envs.QuadraticBandit(), 1)
        b = agents.train(small("td3"), envs.QuadraticBandit(), 2)
        assert not np.array_equal(a.agent.actor.params, b.agent.actor.params)

    def test_mechanics(self):
        steps = []
        cfg = small("awd3", beta_warmup_steps=200, exploration_phase_steps=100, beta_lr=1e-2)
        res = agents.train(cfg, envs.QuadraticBandit(), 0, observer=lambda ag, i: steps.append(i))
        assert len(steps) == 400
        assert all(not s.learning for s in steps[:100]) and all(s.learning for s in steps[100:])
        assert all(s.actor_updated == (s.learning and s.t % 2 == 0) for s in steps)
        assert all(s.beta == 0.5 for s in steps[:200])
        assert all(s.beta_updated == (s.t >= 200) for s in steps)
        assert len(set(s.beta for s in steps[200:])) > 1
        assert len(res.terminal_errors) == 300
        assert res.learning_curve[0].step == 0 and res.learning_curve[-1].step == 400
        assert [b.step for b in res.beta_trace] == [r.step for r in res.learning_curve]

    def test_fixed_beta_has_no_trace(self):
        res = agents.train(small("wd3"), envs.QuadraticBandit(), 0)
        assert res.beta_trace == [] and res.agent.beta == 0.5

    def test_batch_mode_runs(self):
        res = agents.train(small(beta_update_mode="batch", beta_warmup_steps=0, beta_lr=1e-2),
                           envs.QuadraticBandit(), 0)
        assert res.agent.beta != 0.5

    def test_bias_records(self):
        res = agents.train(small("td3", bias_pairs=20, bias_interval=100), envs.PendulumSwingUp(), 0)
        assert [b.step for b in res.bias] == [100, 200, 300, 400]
        assert all(b.n_pairs == 20 and b.rule == "min" for b in res.bias)

    def test_mean_terminal_error(self):
        res = agents.train(small("td3"), envs.QuadraticBandit(), 0)
        last = [r.abs_error for r in res.terminal_errors[-100:]]
        assert res.mean_terminal_error() == pytest.approx(np.mean(last))
        assert math.isnan(agents.train(small("td3"), envs.PendulumSwingUp(), 0).mean_terminal_error())

    def test_evaluate_is_pure(self):
        ag = agents.Agent(small(), envs.PointGoal2D().spec, 0)
        env = envs.PointGoal2D()
        before = {k: g.bit_generator.state for k, g in ag.rngs.items()}
        a = agents.evaluate(ag, env, 3, seed=1)
        assert agents.evaluate(ag, env, 3, seed=1) == a
        assert {k: g.bit_generator.state for k, g in ag.rngs.items()} == before

    def test_evaluate_matches_sequential_episodes(self):
        ag = agents.Agent(small(), envs.PointGoal2D().spec, 0)
        env = envs.PointGoal2D()
        batched = agents.evaluate(ag, env, 3, seed=4)
        env.reset(seed=4)
        seq = []
        for k in range(3):
            s = env.reset(seed=4) if k == 0 else env.reset()
            total = 0.0
            for _ in range(100):
                s, r, kind = env.step(ag.act(s, explore=False))
                total += r
                if kind != Termination.NONE:
                    break
            seq.append(total)
        np.testing.assert_allclose(batched, seq, rtol=1e-12)
