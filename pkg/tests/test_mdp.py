import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from paclab.envs import random_mdp
from paclab.mdp import (InvalidArgument, TabularMdp, bellman_optimality_backup, clip,
                        greedy_policy, optimal_values, policy_evaluation, pseudo_regret,
                        rollout_values)

from conftest import one_state, two_state_chain


class TestTabularMdp:
    def test_rejects_bad_rows(self):
        P = np.array([[[0.5, 0.4]], [[0.0, 1.0]]])
        with pytest.raises(InvalidArgument):
            TabularMdp(P, np.zeros((2, 1)), 0.5)

    def test_renormalizes_tiny_drift(self):
        P = np.array([[[0.5, 0.5 + 5e-10]], [[0.0, 1.0]]])
        mdp = TabularMdp(P, np.zeros((2, 1)), 0.5)
        assert abs(mdp.transitions[0, 0].sum() - 1.0) <= 1e-12

    @pytest.mark.parametrize("reward", [-0.1, 1.5, float("nan")])
    def test_rejects_rewards_outside_unit_interval(self, reward):
        with pytest.raises(InvalidArgument):
            one_state(reward)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.2, 1.3])
    def test_rejects_discount(self, gamma):
        with pytest.raises(InvalidArgument):
            one_state(gamma=gamma)

    def test_negative_probability(self):
        P = np.array([[[1.5, -0.5]], [[0.0, 1.0]]])
        with pytest.raises(InvalidArgument):
            TabularMdp(P, np.zeros((2, 1)), 0.5)

    def test_json_round_trip_is_bit_exact(self, rand5):
        back = TabularMdp.from_json(rand5.to_json())
        assert np.array_equal(back.transitions, rand5.transitions)
        assert np.array_equal(back.rewards, rand5.rewards)
        assert back.discount == rand5.discount
        doc = json.loads(rand5.to_json())
        assert set(doc) == {"num_states", "num_actions", "discount", "rewards", "transitions"}

    def test_malformed_json(self):
        with pytest.raises(InvalidArgument):
            TabularMdp.from_json('{"num_states": 1}')
        with pytest.raises(InvalidArgument):
            TabularMdp.from_json("not json")


class TestClip:
    def test_examples(self):
        assert clip(0.5, 0.2) == 0.5
        assert clip(0.1, 0.2) == 0.0
        assert clip(0.2, 0.2) == 0.2

    def test_non_finite(self):
        with pytest.raises(InvalidArgument):
            clip(math.inf, 0.1)
        with pytest.raises(InvalidArgument):
            clip(0.1, math.nan)


class TestBackup:
    def test_one_state(self):
        mdp = one_state()
        assert bellman_optimality_backup(mdp, [0.0]).tolist() == [1.0]
        assert bellman_optimality_backup(mdp, [2.0]).tolist() == [2.0]

    def test_chain(self, chain):
        assert bellman_optimality_backup(chain, [0.0, 2.0]).tolist() == [1.0, 2.0]

    def test_dimension_mismatch(self, chain):
        with pytest.raises(InvalidArgument):
            bellman_optimality_backup(chain, [0.0])

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), gamma=st.floats(0.1, 0.95))
    def test_contraction(self, seed, gamma):
        mdp = random_mdp(5, 2, 3, seed, gamma)
        v_star, _ = optimal_values(mdp, 1e-12)
        v = np.random.default_rng(seed).uniform(0, mdp.v_max, 5)
        lhs = np.max(np.abs(bellman_optimality_backup(mdp, v) - v_star))
        assert lhs <= gamma * np.max(np.abs(v - v_star)) + 1e-10

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_output_stays_in_range(self, seed):
        mdp = random_mdp(4, 3, 2, seed, 0.8)
        v = np.random.default_rng(seed).uniform(0, mdp.v_max, 4)
        out = bellman_optimality_backup(mdp, v)
        assert np.all(out >= 0) and np.all(out <= mdp.v_max + 1e-9)


class TestOptimalValues:
    def test_geometric_series(self):
        v, q = optimal_values(one_state(), 1e-10)
        assert abs(v[0] - 2.0) <= 1e-10

    def test_chain_closed_form(self, chain):
        v, q = optimal_values(chain, 1e-10)
        assert np.allclose(v, [1.0, 2.0], atol=1e-10, rtol=0)
        assert np.allclose(q[1], 2.0, atol=1e-10, rtol=0)

    def test_residual(self, rand5):
        v, _ = optimal_values(rand5, 1e-8)
        assert np.max(np.abs(v - bellman_optimality_backup(rand5, v))) <= 1e-8

    def test_error_certificate(self, rand5):
        v_loose, _ = optimal_values(rand5, 1e-4)
        v_tight, _ = optimal_values(rand5, 1e-13)
        assert np.max(np.abs(v_loose - v_tight)) <= 1e-4

    @pytest.mark.parametrize("tol", [0.0, -1.0])
    def test_bad_tol(self, chain, tol):
        with pytest.raises(InvalidArgument):
            optimal_values(chain, tol)


class TestGreedy:
    def test_examples(self):
        assert greedy_policy([[1, 2]]).tolist() == [1]
        assert greedy_policy([[3, 3]]).tolist() == [0]
        _, q = optimal_values(two_state_chain())
        assert greedy_policy(q).tolist() == [0, 0]

    @settings(max_examples=50, deadline=None)
    @given(q=st.lists(st.lists(st.integers(0, 5), min_size=3, max_size=3), min_size=1, max_size=6),
           c=st.integers(-3, 3))
    def test_shift_invariance(self, q, c):
        q = np.array(q, dtype=float)
        assert np.array_equal(greedy_policy(q), greedy_policy(q + c))


class TestPolicyEvaluation:
    def test_absorbing(self):
        mdp = one_state(num_actions=2)
        assert abs(policy_evaluation(mdp, np.array([1]), 1e-10)[0] - 2.0) <= 1e-10

    def test_chain(self, chain):
        v = policy_evaluation(chain, np.array([0, 0]), 1e-10)
        assert np.allclose(v, [1.0, 2.0], atol=1e-10, rtol=0)

    def test_greedy_on_q_star_is_optimal(self, rand5):
        tol = 1e-10
        v_star, q_star = optimal_values(rand5, tol)
        v_pi = policy_evaluation(rand5, greedy_policy(q_star), tol)
        assert np.max(np.abs(v_pi - v_star)) <= 2 * tol

    def test_invalid_policy(self, rand5):
        with pytest.raises(InvalidArgument):
            policy_evaluation(rand5, np.array([0, 1, 2, 0, 0]), 1e-10)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), bits=st.integers(0, 31))
    def test_bellman_residual(self, seed, bits):
        tol = 1e-10
        mdp = random_mdp(5, 2, 3, seed, 0.9)
        pi = np.array([(bits >> k) & 1 for k in range(5)])
        v = policy_evaluation(mdp, pi, tol)
        s = np.arange(5)
        resid = v - (mdp.rewards[s, pi] + mdp.discount * mdp.transitions[s, pi] @ v)
        assert np.max(np.abs(resid)) <= tol * (1 + mdp.discount)
        assert np.max(np.abs(pseudo_regret(mdp, v, pi))) <= 2 * tol

    def test_monte_carlo(self, rand5):
        pi = np.array([0, 1, 0, 1, 1])
        gamma = rand5.discount
        horizon = math.ceil(math.log(200 / (1 - gamma)) / math.log(1 / gamma))
        mc = rollout_values(rand5, pi, 100_000, horizon, np.random.default_rng(3))
        assert np.max(np.abs(mc - policy_evaluation(rand5, pi, 1e-10))) <= 0.02


class TestPseudoRegret:
    def test_zero_at_optimum(self, rand5):
        v_star, q_star = optimal_values(rand5, 1e-10)
        assert np.max(np.abs(pseudo_regret(rand5, v_star, greedy_policy(q_star)))) <= 2e-10

    def test_constant_shift(self, rand5):
        v_star, _ = optimal_values(rand5, 1e-10)
        pi = np.array([1, 0, 1, 0, 0])
        before = pseudo_regret(rand5, v_star, pi)
        after = pseudo_regret(rand5, v_star + 0.1, pi)
        assert np.allclose(after, before + (1 - rand5.discount) * 0.1, atol=1e-12)

    def test_mismatch(self, rand5):
        with pytest.raises(InvalidArgument):
            pseudo_regret(rand5, np.zeros(4), np.zeros(5, dtype=int))
