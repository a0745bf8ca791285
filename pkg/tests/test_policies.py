import numpy as np
import pytest

from vflbandit.policies import ArmStatistics, BanditPolicy, forced_exploration_schedule
from vflbandit.seeding import rng_substream


class TestUpdateFormulas:
    def test_worked_example_three_rewards(self):
        policy = BanditPolicy(2, kind="ts")
        policy.update(0, 0.8)
        stats = policy.arm_statistics(0)
        assert stats == ArmStatistics(1, 0.8, 0.5, 0.8, 0.8)

        policy.update(0, 0.4)
        stats = policy.arm_statistics(0)
        assert stats.pulls == 2
        assert stats.mean_estimate == pytest.approx(0.6)
        assert stats.running_max == 0.8
        assert stats.empirical_max_reward == pytest.approx(0.8)

        policy.update(0, 0.9)
        stats = policy.arm_statistics(0)
        assert stats.pulls == 3
        assert stats.mean_estimate == pytest.approx(0.7)
        assert stats.posterior_variance == pytest.approx(1 / 4)
        assert stats.running_max == 0.9
        assert stats.empirical_max_reward == pytest.approx((0.8 * 2 + 0.9) / 3)

    def test_round_counter_and_pull_sum(self):
        policy = BanditPolicy(5, kind="ts")
        rng = rng_substream(0, "draws")
        for t in range(1, 40):
            assert policy.round == t
            assert policy.total_pulls == t - 1
            policy.update(policy.select_arm(rng), 0.5)

    def test_reward_out_of_range_rejected(self):
        policy = BanditPolicy(2, kind="ts")
        with pytest.raises(ValueError):
            policy.update(0, 1.2)
        with pytest.raises(ValueError):
            policy.update(0, -0.1)

    def test_bad_arm_rejected(self):
        policy = BanditPolicy(2, kind="ts")
        with pytest.raises(ValueError):
            policy.update(2, 0.5)

    def test_posterior_variance_identity(self):
        policy = BanditPolicy(1, kind="ts")
        rng = np.random.default_rng(1)
        for _ in range(50):
            policy.update(0, float(rng.random()))
            stats = policy.arm_statistics(0)
            assert stats.posterior_variance == 1.0 / (stats.pulls + 1)


class TestMaxDominatesMeanInvariant:
    def test_fuzz_random_reward_sequences(self):
        # 100k random sequences; the running average of running maxes must
        # dominate the reward average for every prefix.
        rng = np.random.default_rng(2024)
        violations = 0
        for _ in range(100_000):
            length = int(rng.integers(1, 12))
            policy = BanditPolicy(1, kind="ts")
            for reward in rng.random(length):
                policy.update(0, float(reward))
                stats = policy.arm_statistics(0)
                if stats.empirical_max_reward < stats.mean_estimate - 1e-12:
                    violations += 1
                if not (0.0 <= stats.running_max <= 1.0):
                    violations += 1
        assert violations == 0

    def test_running_max_non_decreasing(self):
        policy = BanditPolicy(1, kind="ts")
        rng = np.random.default_rng(5)
        previous = 0.0
        for reward in rng.random(200):
            policy.update(0, float(reward))
            current = policy.arm_statistics(0).running_max
            assert current >= previous
            previous = current


class TestCandidateSet:
    def _seed_stats(self, policy, means, maxes, pulls=10):
        for arm, (mu, phi) in enumerate(zip(means, maxes)):
            policy.pulls[arm] = pulls
            policy.mean_estimates[arm] = mu
            policy.posterior_variances[arm] = 1.0 / (pulls + 1)
            policy.running_maxes[arm] = phi
            policy.empirical_max_rewards[arm] = phi
        policy.round = pulls * len(means) + 1

    def test_threshold_from_empirical_best_arm(self):
        policy = BanditPolicy(3, kind="ets", warmup_rounds=0, forced_pulls_per_arm=0)
        self._seed_stats(policy, means=[0.60, 0.40, 0.65], maxes=[0.90, 0.50, 0.70])
        assert set(policy.candidate_set().tolist()) == {0, 2}

    def test_warmup_returns_full_set(self):
        policy = BanditPolicy(4, kind="ets", warmup_rounds=10, forced_pulls_per_arm=0)
        assert policy.round == 1
        assert policy.candidate_set().tolist() == [0, 1, 2, 3]

    def test_unpulled_arm_excluded_after_warmup(self):
        policy = BanditPolicy(3, kind="ets", warmup_rounds=0, forced_pulls_per_arm=0)
        self._seed_stats(policy, means=[0.5, 0.4, 0.0], maxes=[0.6, 0.5, 0.0])
        policy.pulls[2] = 0  # never pulled: zero max, excluded by a positive threshold
        assert 2 not in policy.candidate_set().tolist()

    def test_empty_fully_explored_set_falls_back_to_all(self):
        policy = BanditPolicy(3, kind="ets", warmup_rounds=0, forced_pulls_per_arm=0)
        policy.round = 100  # threshold (t-1)/N = 33 pulls; nobody qualifies
        policy.pulls[:] = [5, 5, 5]
        assert policy.candidate_set().tolist() == [0, 1, 2]

    def test_candidate_set_contains_empirical_best_arm(self):
        rng = np.random.default_rng(3)
        env_means = rng.random(6)
        policy = BanditPolicy(6, kind="ets", warmup_rounds=12)
        draws = rng_substream(3, "draws")
        for _ in range(400):
            arm = policy.select_arm(draws)
            policy.update(arm, float(np.clip(rng.normal(env_means[arm], 0.2), 0, 1)))
            threshold_pulls = (policy.round - 1) / policy.n_arms
            explored = np.flatnonzero(policy.pulls >= threshold_pulls)
            if explored.size and policy.round > policy.warmup_rounds:
                best = explored[np.argmax(policy.mean_estimates[explored])]
                assert best in policy.candidate_set().tolist()


class TestSelection:
    def test_singleton_candidate_set_is_forced(self):
        policy = BanditPolicy(6, kind="fixed", fixed_arm=3)
        rng = rng_substream(0, "x")
        assert all(policy.select_arm(rng) == 3 for _ in range(10))

    def test_fixed_policy_repeats_arm(self):
        policy = BanditPolicy(8, kind="fixed", fixed_arm=5)
        rng = rng_substream(1, "x")
        for _ in range(20):
            arm = policy.select_arm(rng)
            assert arm == 5
            policy.update(arm, 0.3)

    def test_confident_arm_dominates_sampling(self):
        # Two arms, 1000 pulls each at rewards 1.0 and 0.0: the good arm
        # must win nearly every posterior draw.
        policy = BanditPolicy(2, kind="ts")
        for _ in range(1000):
            policy.update(0, 1.0)
            policy.update(1, 0.0)
        rng = rng_substream(11, "draws")
        picks = sum(policy.select_arm(rng) == 0 for _ in range(10_000))
        assert picks >= 9_900

    def test_selection_deterministic_given_seed(self):
        def trajectory(seed):
            policy = BanditPolicy(7, kind="ets", warmup_rounds=14)
            rng = rng_substream(seed, "sel")
            rewards = rng_substream(seed, "rew")
            arms = []
            for _ in range(80):
                arm = policy.select_arm(rng)
                policy.update(arm, float(rewards.random()))
                arms.append(arm)
            return arms

        assert trajectory(5) == trajectory(5)
        assert trajectory(5) != trajectory(6)

    def test_random_policy_covers_arms(self):
        policy = BanditPolicy(4, kind="random")
        rng = rng_substream(2, "x")
        seen = {policy.select_arm(rng) for _ in range(200)}
        assert seen == {0, 1, 2, 3}


class TestForcedExploration:
    def test_round_robin_schedule(self):
        assert forced_exploration_schedule(3, 6, 2) == [0, 1, 2, 0, 1, 2]

    def test_disabled_schedule_empty(self):
        assert forced_exploration_schedule(5, 0, 0) == []

    def test_too_small_warmup_rejected(self):
        with pytest.raises(ValueError):
            forced_exploration_schedule(10, 19, 2)

    def test_policy_follows_schedule_then_samples(self):
        policy = BanditPolicy(21, kind="ets", warmup_rounds=80, forced_pulls_per_arm=2)
        rng = rng_substream(4, "draws")
        arms = []
        for _ in range(80):
            arm = policy.select_arm(rng)
            arms.append(arm)
            policy.update(arm, 0.5)
        assert arms[:42] == list(range(21)) * 2
        # Remaining warm-up rounds are free sampling over the full set.
        assert policy.last_candidate_size == 21

    def test_ets_default_forcing_requires_room(self):
        with pytest.raises(ValueError):
            BanditPolicy(100, kind="ets", warmup_rounds=150)  # default 2 pulls/arm


class TestPolicyEquivalence:
    def test_ets_with_long_warmup_matches_plain_ts(self):
        def run(kind, warmup):
            policy = BanditPolicy(
                10, kind=kind, warmup_rounds=warmup, forced_pulls_per_arm=0
            )
            rng = rng_substream(9, "sel")
            rewards = rng_substream(9, "rew")
            arms = []
            for _ in range(300):
                arm = policy.select_arm(rng)
                policy.update(arm, float(rewards.random()))
                arms.append(arm)
            return arms

        assert run("ets", warmup=300) == run("ts", warmup=0)

    def test_regret_identity_pull_counts(self):
        # Trajectory regret computed round by round equals the pull-count
        # weighted gap sum.
        rng = np.random.default_rng(12)
        means = np.array([0.9, 0.6, 0.3])
        gaps = means.max() - means
        policy = BanditPolicy(3, kind="ts")
        draws = rng_substream(12, "draws")
        regret = 0.0
        for _ in range(500):
            arm = policy.select_arm(draws)
            policy.update(arm, float(np.clip(rng.normal(means[arm], 0.1), 0, 1)))
            regret += gaps[arm]
        assert regret == pytest.approx(float((policy.pulls * gaps).sum()))
        assert policy.total_pulls == 500
