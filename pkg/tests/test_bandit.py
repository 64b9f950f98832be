from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2b.bandit import (LinUCB, OneHotLinUCB, RewardObservation, load_state, merge_statistics,
                        new_agent, save_state, select_action, update)


def direct_solve_scores(agent: LinUCB, x: np.ndarray) -> np.ndarray:
    """Textbook LinUCB from the raw A and b, using an explicit inverse."""
    out = []
    for a in range(agent.actions):
        inv = np.linalg.inv(agent.A[a])
        out.append(inv @ agent.b[a] @ x + agent.alpha * np.sqrt(x @ inv @ x))
    return np.array(out)


class TestConstruction:
    def test_identity_start(self):
        agent = new_agent(2, 3, 1.0)
        assert agent.A.shape == (3, 2, 2)
        np.testing.assert_array_equal(agent.A, np.repeat(np.eye(2)[None], 3, axis=0))
        np.testing.assert_array_equal(agent.b, 0)

    def test_scalar_case(self):
        agent = new_agent(1, 1, 0.0)
        assert agent.A.shape == (1, 1, 1) and agent.A[0, 0, 0] == 1.0

    def test_shapes(self):
        agent = new_agent(10, 40)
        assert agent.A.shape == (40, 10, 10) and agent.b.shape == (40, 10)

    @pytest.mark.parametrize("dim,actions,alpha", [(0, 1, 1.0), (1, 0, 1.0), (2, 2, -0.1)])
    def test_rejects_bad_shape(self, dim, actions, alpha):
        with pytest.raises(ValueError):
            LinUCB(dim, actions, alpha)


class TestScoring:
    def test_fresh_agent_ties_to_zero(self):
        a, s = select_action(new_agent(2, 3), np.array([1.0, 0.0]))
        assert a == 0
        np.testing.assert_allclose(s, [1.0, 1.0, 1.0])

    def test_after_one_reward(self):
        agent = new_agent(2, 3)
        update(agent, RewardObservation(np.array([1.0, 0.0]), 0, 1))
        np.testing.assert_allclose(agent.A[0], np.diag([2.0, 1.0]))
        np.testing.assert_allclose(agent.b[0], [1.0, 0.0])
        a, s = agent.select(np.array([1.0, 0.0]))
        assert a == 0
        assert s[0] == pytest.approx(0.5 + np.sqrt(0.5), abs=1e-12)

    def test_pure_exploitation(self):
        a, s = new_agent(3, 4, alpha=0.0).select(np.array([0.2, 0.3, 0.5]))
        assert a == 0
        np.testing.assert_array_equal(s, 0.0)

    def test_zero_reward_still_grows_design_matrix(self):
        agent = new_agent(2, 2)
        agent.update(np.array([1.0, 0.0]), 1, 0)
        np.testing.assert_allclose(agent.A[1], np.diag([2.0, 1.0]))
        np.testing.assert_array_equal(agent.b[1], 0)
        np.testing.assert_array_equal(agent.A[0], np.eye(2))

    def test_two_updates_hand_computed(self):
        agent = new_agent(2, 1)
        agent.update(np.array([0.0, 1.0]), 0, 1)
        agent.update(np.array([1.0, 0.0]), 0, 1)
        np.testing.assert_allclose(agent.A[0], np.diag([2.0, 2.0]))
        np.testing.assert_allclose(agent.b[0], [1.0, 1.0])
        np.testing.assert_allclose(agent._theta[0], [0.5, 0.5])

    @pytest.mark.parametrize("x", [np.array([1.0]), np.array([np.nan, 0.0]), np.array([np.inf, 0])])
    def test_rejects_bad_context(self, x):
        with pytest.raises(ValueError):
            new_agent(2, 2).select(x)

    def test_rejects_bad_action(self):
        with pytest.raises(ValueError):
            new_agent(2, 2).update(np.array([1.0, 0.0]), 2, 1)


class TestIncrementalInverse:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 40), st.integers(0, 2**32 - 1))
    def test_matches_direct_solve(self, dim, actions, steps, seed):
        rng = np.random.default_rng(seed)
        agent = LinUCB(dim, actions, alpha=float(rng.uniform(0, 2)))
        for _ in range(steps):
            x = rng.random(dim)
            a, _ = agent.select(x)
            agent.update(x, a, int(rng.integers(2)))
        x = rng.random(dim)
        np.testing.assert_allclose(agent.scores(x), agent.direct_scores(x), rtol=0, atol=1e-8)
        np.testing.assert_allclose(agent.scores(x), direct_solve_scores(agent, x), atol=1e-8)


class TestOneHot:
    def test_matches_dense_on_one_hot_contexts(self):
        rng = np.random.default_rng(4)
        k, actions = 7, 3
        sparse, dense = OneHotLinUCB(k, actions), LinUCB(k, actions)
        for _ in range(200):
            c = int(rng.integers(k))
            x = np.eye(k)[c]
            a, s = sparse.select(c)
            a2, s2 = dense.select(x)
            np.testing.assert_allclose(s, s2, atol=1e-10)
            assert a == a2
            r = int(rng.integers(2))
            sparse.update(c, a, r)
            dense.update(x, a, r)
        np.testing.assert_allclose(sparse.to_dense().A, dense.A, atol=1e-12)

    def test_accepts_vector_or_code(self):
        agent = OneHotLinUCB(4, 2)
        agent.update(np.eye(4)[2], 0, 1)
        np.testing.assert_array_equal(agent.scores(2), agent.scores(np.eye(4)[2]))

    @pytest.mark.parametrize("x", [4, -1, np.array([0.5, 0.5, 0, 0]), np.ones(4)])
    def test_rejects_non_code(self, x):
        with pytest.raises(ValueError):
            OneHotLinUCB(4, 2).scores(x)


class TestMerge:
    def _batch(self, rng, n, dim, actions):
        return [RewardObservation(rng.random(dim), int(rng.integers(actions)), int(rng.integers(2)))
                for _ in range(n)]

    def test_empty_batch(self):
        agent = new_agent(3, 2)
        merge_statistics(agent, [])
        np.testing.assert_array_equal(agent.A, new_agent(3, 2).A)

    def test_single_equals_update(self):
        obs = RewardObservation(np.array([0.3, 0.7]), 1, 1)
        a, b = new_agent(2, 2), new_agent(2, 2)
        merge_statistics(a, [obs])
        update(b, obs)
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.b, b.b)

    def test_order_independent(self):
        rng = np.random.default_rng(8)
        batch = self._batch(rng, 100, 5, 4)
        fwd, rev = new_agent(5, 4), new_agent(5, 4)
        merge_statistics(fwd, batch)
        merge_statistics(rev, batch[::-1])
        np.testing.assert_allclose(fwd.A, rev.A, rtol=0, atol=1e-12)
        np.testing.assert_allclose(fwd.b, rev.b, rtol=0, atol=1e-12)

    def test_bad_batch_leaves_state(self):
        agent = new_agent(2, 2)
        bad = [RewardObservation(np.array([1.0, 0.0]), 0, 1),
               RewardObservation(np.array([1.0, 0.0, 0.0]), 0, 1)]
        with pytest.raises(ValueError):
            merge_statistics(agent, bad)
        np.testing.assert_array_equal(agent.A, new_agent(2, 2).A)


class TestPersistence:
    def test_copy_is_independent(self):
        agent = new_agent(2, 2)
        clone = agent.copy()
        clone.update(np.array([1.0, 0.0]), 0, 1)
        np.testing.assert_array_equal(agent.A[0], np.eye(2))

    @pytest.mark.parametrize("make", [lambda: LinUCB(3, 2, 0.5), lambda: OneHotLinUCB(5, 3, 2.0)])
    def test_json_round_trip(self, tmp_path, make):
        state = make()
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = np.eye(state.dim)[rng.integers(state.dim)]
            state.update(x, int(rng.integers(state.actions)), 1)
        save_state(state, tmp_path / "s.json")
        back = load_state(tmp_path / "s.json")
        assert type(back) is type(state) and back.alpha == state.alpha
        x = np.eye(state.dim)[0]
        np.testing.assert_allclose(back.scores(x), state.scores(x), atol=1e-12)
