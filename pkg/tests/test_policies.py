import math

import numpy as np
import pytest
from scipy.special import ndtri

from arcbandit.belief import GaussianBelief
from arcbandit.glm import ArmSet, logistic_spec, reward_vector
from arcbandit.policies import (
    IndependentArmStats,
    bayes_ucb,
    decision_from_probs,
    epsilon_greedy,
    explore_then_commit,
    greedy_decision,
    ids,
    knowledge_gradient,
    minimise_info_ratio,
    thompson,
    ucb1,
    ucb_tuned,
)

from conftest import random_spd
from oracles import ucb_tuned_index_literal


def two_arm_set(prices=(5.0, 7.0), arrivals=2.0):
    return ArmSet.for_pricing(prices, arrivals)


def exchangeable_arms():
    """Two arms whose roles swap under permuting the parameter coordinates."""
    return ArmSet(features=[[0.3, 0.8], [0.8, 0.3]], prices=[2.0, 2.0], arrivals=[5.0, 5.0])


class TestDecisionFromProbs:
    def test_inverse_cdf_boundaries(self):
        probs = np.array([0.3, 0.3, 0.4])
        assert decision_from_probs(probs, 0.0).arm == 0
        assert decision_from_probs(probs, 0.3).arm == 0
        assert decision_from_probs(probs, 0.30000001).arm == 1
        assert decision_from_probs(probs, 0.6).arm == 1
        assert decision_from_probs(probs, 0.61).arm == 2
        assert decision_from_probs(probs, 1.0).arm == 2

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            decision_from_probs(np.array([0.5, 0.6]), 0.5)
        with pytest.raises(ValueError):
            decision_from_probs(np.array([-0.1, 1.1]), 0.5)


class TestEpsilonGreedy:
    def test_zero_eps_is_greedy(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = epsilon_greedy(belief, arms, spec, eps=0.0, zeta=0.99)
        assert decision.arm == 1  # higher price wins at flat mean
        np.testing.assert_array_equal(decision.probs, [0.0, 1.0])

    def test_full_eps_is_uniform(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = epsilon_greedy(belief, arms, spec, eps=1.0, zeta=0.3)
        np.testing.assert_allclose(decision.probs, [0.5, 0.5])

    def test_mixture_weights(self, spec):
        # h = (5, 7) at flat mean for prices (5, 7) with 2 arrivals
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = epsilon_greedy(belief, arms, spec, eps=0.2, zeta=0.05)
        np.testing.assert_allclose(decision.probs, [0.1, 0.9])
        assert decision.arm == 0  # zeta below the first cumulative mass

    def test_rejects_bad_eps(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        with pytest.raises(ValueError):
            epsilon_greedy(belief, arms, spec, eps=1.5, zeta=0.5)


class TestExploreThenCommit:
    def test_uniform_during_exploration(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = explore_then_commit(belief, arms, spec, t=1, horizon=365, eps=0.1, zeta=0.4)
        np.testing.assert_allclose(decision.probs, [0.5, 0.5])

    def test_commit_boundary(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        # floor(0.1 * 365) = 36: day 36 explores, day 37 commits
        explore = explore_then_commit(belief, arms, spec, t=36, horizon=365, eps=0.1, zeta=0.4)
        commit = explore_then_commit(belief, arms, spec, t=37, horizon=365, eps=0.1, zeta=0.4)
        np.testing.assert_allclose(explore.probs, [0.5, 0.5])
        np.testing.assert_array_equal(commit.probs, [0.0, 1.0])

    def test_zero_eps_commits_immediately(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = explore_then_commit(belief, arms, spec, t=1, horizon=365, eps=0.0, zeta=0.4)
        assert decision.probs[decision.arm] == 1.0


class TestThompson:
    def test_degenerate_posterior_is_greedy(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.2, -0.1], sigma=np.zeros((2, 2)))
        rng = np.random.default_rng(0)
        expected = greedy_decision(belief, arms, spec).arm
        for _ in range(10):
            assert thompson(belief, arms, spec, rng).arm == expected

    def test_symmetric_arms_split_evenly(self, spec):
        arms = exchangeable_arms()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        rng = np.random.default_rng(1)
        picks = np.array([thompson(belief, arms, spec, rng).arm for _ in range(10_000)])
        assert abs(picks.mean() - 0.5) < 0.02

    def test_frequencies_match_monte_carlo_oracle(self, spec):
        arms = ArmSet.for_pricing([1.0, 2.0, 3.0], 10.0)
        belief = GaussianBelief(
            m=[0.3, -0.4], sigma=random_spd(np.random.default_rng(5), 2)
        )
        # Oracle: direct argmax frequencies from a large posterior sample.
        oracle_rng = np.random.default_rng(123)
        chol = np.linalg.cholesky(belief.sigma)
        theta = belief.m + oracle_rng.standard_normal((1_000_000, 2)) @ chol.T
        rewards = (arms.arrivals * arms.prices)[None, :] * spec.g1(theta @ arms.features.T)
        oracle_freq = np.bincount(np.argmax(rewards, axis=1), minlength=3) / 1e6

        rng = np.random.default_rng(7)
        picks = np.array([thompson(belief, arms, spec, rng).arm for _ in range(100_000)])
        freq = np.bincount(picks, minlength=3) / picks.size
        assert np.max(np.abs(freq - oracle_freq)) < 0.01


class TestBayesUcb:
    def test_median_quantile_reduces_to_greedy(self, spec):
        arms = two_arm_set()
        rng = np.random.default_rng(2)
        belief = GaussianBelief(m=[0.4, -0.3], sigma=random_spd(rng, 2))
        # t = 2, c = 0 gives p = 1 - 1/2 = 0.5, the median: greedy on the mean
        decision = bayes_ucb(belief, arms, spec, t=2, horizon=365, c=0.0)
        assert decision.arm == greedy_decision(belief, arms, spec).arm

    def test_zero_covariance_is_greedy_for_any_quantile(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.4, -0.3], sigma=np.zeros((2, 2)))
        for t in (1, 5, 100):
            decision = bayes_ucb(belief, arms, spec, t=t, horizon=365, c=0.0)
            assert decision.arm == greedy_decision(belief, arms, spec).arm

    def test_first_step_clamps_to_pessimistic_quantile(self, spec):
        arms = ArmSet.for_pricing([19.0, 99.0, 399.0], 270.0)
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = bayes_ucb(belief, arms, spec, t=1, horizon=365, c=0.0)
        # p = 1 - 1/1 = 0 clamps to 1e-12; reproduce the clamped decision
        z = ndtri(1e-12)
        x = arms.features
        upper = x @ belief.m + z * np.sqrt(np.einsum("ki,ij,kj->k", x, belief.sigma, x))
        expected = int(np.argmax(reward_vector(arms, spec, upper)))
        assert decision.arm == expected

    def test_optimism_grows_with_time(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        with pytest.raises(ValueError):
            bayes_ucb(belief, arms, spec, t=0, horizon=365)
        with pytest.raises(ValueError):
            bayes_ucb(belief, arms, spec, t=1, horizon=1)


class TestKnowledgeGradient:
    def test_degenerate_posterior_is_greedy(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.1, 0.05], sigma=np.zeros((2, 2)))
        rng = np.random.default_rng(3)
        decision = knowledge_gradient(belief, arms, spec, beta=0.9, rng=rng)
        assert decision.arm == greedy_decision(belief, arms, spec).arm

    def test_vanishing_lookahead_is_greedy(self, spec):
        arms = two_arm_set()
        rng = np.random.default_rng(4)
        belief = GaussianBelief(m=[0.3, -0.2], sigma=random_spd(rng, 2))
        decision = knowledge_gradient(
            belief, arms, spec, beta=1e-12, rng=np.random.default_rng(9)
        )
        assert decision.arm == greedy_decision(belief, arms, spec).arm

    def test_prefers_informative_arm_when_rewards_tie(self, spec):
        # Both arms have the same immediate reward at the flat mean, but the
        # zero-feature arm reveals nothing about the parameter.
        arms = ArmSet(
            features=[[0.0, 0.0], [1.0, 1.0]], prices=[3.0, 3.0], arrivals=[50.0, 50.0]
        )
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        for seed in range(5):
            decision = knowledge_gradient(
                belief, arms, spec, beta=0.99, rng=np.random.default_rng(seed)
            )
            assert decision.arm == 1

    def test_deterministic_given_seed(self, spec):
        arms = ArmSet.for_pricing([1.0, 2.0, 4.0], 30.0)
        belief = GaussianBelief(m=[0.2, -0.3], sigma=0.5 * np.eye(2))
        first = knowledge_gradient(belief, arms, spec, 0.99, np.random.default_rng(11))
        second = knowledge_gradient(belief, arms, spec, 0.99, np.random.default_rng(11))
        assert first.arm == second.arm
        np.testing.assert_array_equal(first.probs, second.probs)


class TestInfoRatioMinimiser:
    def test_single_arm(self):
        np.testing.assert_array_equal(minimise_info_ratio([1.0], [0.5]), [1.0])

    def test_zero_regret_arm_with_gain_wins(self):
        probs = minimise_info_ratio([0.0, 1.0], [0.1, 0.1])
        np.testing.assert_array_equal(probs, [1.0, 0.0])

    def test_identical_arms_tie_break_to_first(self):
        probs = minimise_info_ratio([0.5, 0.5], [0.2, 0.2])
        np.testing.assert_array_equal(probs, [1.0, 0.0])

    def test_mixes_regret_against_information(self):
        # Arm 0: small regret, almost no gain. Arm 1: large regret but very
        # informative. The optimal distribution mixes the two strictly.
        delta = np.array([0.3, 1.0])
        gain = np.array([0.01, 1.0])
        probs = minimise_info_ratio(delta, gain)
        assert np.count_nonzero(probs) == 2
        ours = float(probs @ delta) ** 2 / float(probs @ gain)
        qs = np.linspace(0.0, 1.0, 100_001)
        grid = (qs * delta[0] + (1 - qs) * delta[1]) ** 2 / (
            qs * gain[0] + (1 - qs) * gain[1]
        )
        assert ours <= grid.min() + 1e-10

    def test_support_at_most_two(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            k = int(rng.integers(1, 11))
            probs = minimise_info_ratio(rng.uniform(0, 5, k), rng.uniform(0, 2, k))
            assert np.count_nonzero(probs) <= 2
            assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_beats_dense_grid_on_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            delta = rng.uniform(0, 3, 2)
            gain = rng.uniform(0, 1, 2)
            probs = minimise_info_ratio(delta, gain)
            d = float(probs @ delta)
            g = float(probs @ gain)
            ours = 0.0 if d <= 0 else (math.inf if g <= 0 else d * d / g)
            qs = np.linspace(0, 1, 20_001)
            ds = qs * delta[0] + (1 - qs) * delta[1]
            gs = qs * gain[0] + (1 - qs) * gain[1]
            grid = np.full_like(qs, np.inf)
            zero = ds <= 0
            pos = (~zero) & (gs > 0)
            grid[zero] = 0.0
            grid[pos] = ds[pos] ** 2 / gs[pos]
            assert ours <= grid.min() + 1e-10


class TestIds:
    def test_single_arm(self, spec):
        arms = ArmSet.for_pricing([2.0], 10.0)
        belief = GaussianBelief(m=[0.1, 0.1], sigma=np.eye(2))
        decision = ids(belief, arms, spec, np.random.default_rng(0))
        np.testing.assert_array_equal(decision.probs, [1.0])

    def test_degenerate_posterior_is_greedy(self, spec):
        arms = two_arm_set()
        belief = GaussianBelief(m=[0.3, -0.1], sigma=np.zeros((2, 2)))
        decision = ids(belief, arms, spec, np.random.default_rng(1))
        assert decision.arm == greedy_decision(belief, arms, spec).arm

    def test_symmetric_arms_return_first(self, spec):
        arms = exchangeable_arms()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.eye(2))
        decision = ids(belief, arms, spec, np.random.default_rng(2), n_mc=4096)
        assert decision.probs[0] == pytest.approx(1.0, abs=0.2)

    def test_support_at_most_two(self, spec):
        rng = np.random.default_rng(3)
        arms = ArmSet.for_pricing([1.0, 2.0, 3.0, 5.0, 8.0], 20.0)
        for seed in range(20):
            belief = GaussianBelief(m=rng.standard_normal(2), sigma=random_spd(rng, 2))
            decision = ids(belief, arms, spec, np.random.default_rng(seed))
            assert np.count_nonzero(decision.probs) <= 2

    def test_deterministic_given_seed(self, spec):
        arms = ArmSet.for_pricing([1.0, 2.0, 3.0], 20.0)
        belief = GaussianBelief(m=[0.1, -0.2], sigma=0.3 * np.eye(2))
        a = ids(belief, arms, spec, np.random.default_rng(42))
        b = ids(belief, arms, spec, np.random.default_rng(42))
        assert a.arm == b.arm
        np.testing.assert_array_equal(a.probs, b.probs)


class TestUcb:
    def test_initialisation_sweep(self):
        arms = ArmSet.for_pricing([1.0, 2.0, 3.0], 10.0)
        stats = IndependentArmStats.zeros(3)
        assert ucb1(stats, arms, t=1).arm == 0
        stats.update(0, 0.5)
        assert ucb1(stats, arms, t=2).arm == 1
        stats.update(1, 0.5)
        assert ucb1(stats, arms, t=3).arm == 2
        assert ucb_tuned(IndependentArmStats.zeros(3), arms, t=1).arm == 0

    def test_least_pulled_wins_on_equal_means(self):
        arms = ArmSet.for_pricing([2.0, 2.0001], 10.0)
        stats = IndependentArmStats.zeros(2)
        for _ in range(10):
            stats.update(0, 1.0)
        for _ in range(3):
            stats.update(1, 1.0)
        assert ucb1(stats, arms, t=14).arm == 1

    def test_hand_computed_index(self):
        arms = ArmSet.for_pricing([2.0, 2.0001], 10.0)
        stats = IndependentArmStats.zeros(2)
        stats.pulls = np.array([10, 10])
        stats.mean_reward = np.array([1.0, 1.2])
        stats.mean_sq = np.array([1.2, 1.6])
        decision = ucb1(stats, arms, t=20)
        bonus = 2.0 * math.sqrt(2.0 * math.log(20) / 10)
        assert bonus == pytest.approx(1.548, abs=2e-3)
        assert decision.arm == 1  # 1.2 + bonus beats 1.0 + bonus

    def test_ucb1_matches_index_formula_on_random_stats(self):
        rng = np.random.default_rng(8)
        arms = ArmSet.for_pricing([1.0, 3.0, 6.0, 9.0], 10.0)
        for _ in range(200):
            stats = IndependentArmStats.zeros(4)
            stats.pulls = rng.integers(1, 50, size=4)
            stats.mean_reward = rng.uniform(0, arms.prices)
            stats.mean_sq = stats.mean_reward**2 + rng.uniform(0, 1, 4)
            t = int(rng.integers(4, 400))
            indices = stats.mean_reward + arms.prices * np.sqrt(
                2.0 * math.log(t) / stats.pulls
            )
            assert ucb1(stats, arms, t).arm == int(np.argmax(indices))

    def test_ucb_tuned_matches_literal_oracle(self):
        rng = np.random.default_rng(9)
        arms = ArmSet.for_pricing([1.0, 3.0, 6.0, 9.0], 10.0)
        for _ in range(200):
            stats = IndependentArmStats.zeros(4)
            stats.pulls = rng.integers(1, 50, size=4)
            stats.mean_reward = rng.uniform(0, arms.prices)
            stats.mean_sq = stats.mean_reward**2 + rng.uniform(0, 1, 4)
            t = int(rng.integers(4, 400))
            oracle = [
                ucb_tuned_index_literal(
                    int(stats.pulls[k]),
                    float(stats.mean_reward[k]),
                    float(stats.mean_sq[k]),
                    float(arms.prices[k]),
                    t,
                )
                for k in range(4)
            ]
            assert ucb_tuned(stats, arms, t).arm == int(np.argmax(oracle))

    def test_tuned_bonus_capped_below_ucb1_for_low_variance(self):
        # Zero empirical variance with enough pulls: min(1/4, V) caps the
        # bonus strictly below the UCB1 bonus.
        pulls, mean, price, t = 50, 0.5, 1.0, 100
        tuned = ucb_tuned_index_literal(pulls, mean, mean * mean + 0.0, price, t)
        plain = mean + price * math.sqrt(2.0 * math.log(t) / pulls)
        assert tuned < plain

    def test_stats_running_moments(self):
        stats = IndependentArmStats.zeros(2)
        values = [0.5, 1.5, 2.5, 0.0]
        for v in values:
            stats.update(1, v)
        assert stats.pulls[1] == 4
        assert stats.mean_reward[1] == pytest.approx(np.mean(values))
        assert stats.mean_sq[1] == pytest.approx(np.mean(np.square(values)))
        assert stats.pulls[0] == 0


class TestGreedyLimits:
    def test_all_policies_agree_with_greedy_argmax_and_tie_break(self, spec):
        # Exchangeable arms at a symmetric belief have exactly tied rewards;
        # every greedy-limit policy must pick the lowest index.
        arms = exchangeable_arms()
        belief = GaussianBelief(m=[0.0, 0.0], sigma=np.zeros((2, 2)))
        rng = np.random.default_rng(10)
        greedy_arm = greedy_decision(belief, arms, spec).arm
        assert greedy_arm == 0
        assert epsilon_greedy(belief, arms, spec, 0.0, 0.999).arm == greedy_arm
        assert explore_then_commit(belief, arms, spec, 100, 365, 0.1, 0.5).arm == greedy_arm
        assert thompson(belief, arms, spec, rng).arm == greedy_arm
        assert bayes_ucb(belief, arms, spec, 50, 365).arm == greedy_arm
        assert knowledge_gradient(belief, arms, spec, 1e-12, rng).arm == greedy_arm

    def test_probs_are_distributions(self, spec):
        rng = np.random.default_rng(11)
        arms = ArmSet.for_pricing([1.0, 2.0, 3.0], 15.0)
        stats = IndependentArmStats.zeros(3)
        stats.pulls = np.array([3, 4, 5])
        stats.mean_reward = np.array([0.5, 0.9, 1.2])
        stats.mean_sq = stats.mean_reward**2 + 0.1
        belief = GaussianBelief(m=[0.1, -0.2], sigma=random_spd(rng, 2))
        decisions = [
            epsilon_greedy(belief, arms, spec, 0.3, 0.5),
            explore_then_commit(belief, arms, spec, 2, 365, 0.1, 0.5),
            thompson(belief, arms, spec, rng),
            bayes_ucb(belief, arms, spec, 7, 365),
            knowledge_gradient(belief, arms, spec, 0.9, rng, n_mc=16),
            ids(belief, arms, spec, rng, n_mc=64),
            ucb1(stats, arms, 13),
            ucb_tuned(stats, arms, 13),
        ]
        for decision in decisions:
            assert np.all(decision.probs >= 0)
            assert decision.probs.sum() == pytest.approx(1.0, abs=1e-12)
            assert 0 <= decision.arm < 3
