import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awd3.replay import Batch, EmptyBufferError, ReplayBuffer, Termination, Transition


def _t(i, kind=Termination.NONE):
    return Transition(np.array([float(i), 0.0]), np.array([float(-i)]), float(i),
                      np.array([float(i + 1), 0.0]), kind)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(3, 2, 1)
        for i in range(5):
            buf.push(_t(i))
        assert len(buf) == 3
        assert [t.reward for t in buf.ordered()] == [2.0, 3.0, 4.0]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 20), st.integers(0, 60))
    def test_holds_the_newest_min_capacity(self, cap, n):
        buf = ReplayBuffer(cap, 2, 1)
        for i in range(n):
            buf.push(_t(i))
        assert len(buf) == min(cap, n)
        assert [t.reward for t in buf.ordered()] == [float(i) for i in range(max(0, n - cap), n)]

    def test_round_trip_preserves_fields(self):
        buf = ReplayBuffer(4, 2, 1)
        t = _t(7, Termination.TIME_LIMIT)
        buf.push(t)
        back = buf.transition(0)
        assert back.termination is Termination.TIME_LIMIT
        np.testing.assert_array_equal(back.state, t.state)
        np.testing.assert_array_equal(back.next_state, t.next_state)
        assert back.reward == 7.0

    def test_last_terminal_ignores_time_limits(self):
        buf = ReplayBuffer(10, 2, 1)
        assert buf.last_terminal is None
        buf.push(_t(1, Termination.TRUE_TERMINAL))
        buf.push(_t(2, Termination.TIME_LIMIT))
        buf.push(_t(3))
        assert buf.last_terminal.reward == 1.0
        assert buf.last_terminal.is_true_terminal

    def test_last_terminal_is_a_copy(self):
        buf = ReplayBuffer(10, 2, 1)
        t = _t(1, Termination.TRUE_TERMINAL)
        buf.push(t)
        t.state[0] = 99.0
        assert buf.last_terminal.state[0] == 1.0

    def test_done_mask_is_true_terminals_only(self):
        buf = ReplayBuffer(3, 2, 1)
        for i, k in enumerate(Termination):
            buf.push(_t(i, k))
        batch = buf.gather(np.arange(3))
        assert batch.done.tolist() == [False, True, False]

    def test_sampling_is_uniform_and_seeded(self):
        buf = ReplayBuffer(10, 2, 1)
        for i in range(10):
            buf.push(_t(i))
        a = buf.sample_indices(20_000, np.random.default_rng(1))
        b = buf.sample_indices(20_000, np.random.default_rng(1))
        assert np.array_equal(a, b)
        counts = np.bincount(a, minlength=10)
        assert counts.min() > 1800 and counts.max() < 2200

    def test_sample_uniform_returns_transitions(self):
        buf = ReplayBuffer(5, 2, 1)
        for i in range(5):
            buf.push(_t(i))
        out = buf.sample_uniform(4, np.random.default_rng(0))
        assert len(out) == 4 and all(isinstance(t, Transition) for t in out)

    def test_batch_shapes(self):
        buf = ReplayBuffer(5, 2, 1)
        for i in range(5):
            buf.push(_t(i))
        b = buf.sample_batch(8, np.random.default_rng(0))
        assert isinstance(b, Batch) and len(b) == 8
        assert b.states.shape == (8, 2) and b.actions.shape == (8, 1)

    def test_empty_and_invalid(self):
        buf = ReplayBuffer(5, 2, 1)
        with pytest.raises(EmptyBufferError):
            buf.sample_batch(1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            buf.push(Transition(np.zeros(3), np.zeros(1), 0.0, np.zeros(2)))
        with pytest.raises(ValueError):
            ReplayBuffer(0, 1, 1)
