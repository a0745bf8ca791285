import numpy as np
import pytest
from scipy import integrate, stats

from vflbandit.envs import (
    EnvironmentSpec,
    GaussianArmSpec,
    classify_competitive,
    cumulative_regret,
    grid_environment,
    needle_environment,
    pull,
    pull_arm,
)
from vflbandit.seeding import rng_substream


def clamped_gaussian_mean(mean, variance):
    """Quadrature oracle for E[min(max(X, 0), 1)] with X ~ N(mean, variance)."""
    sigma = np.sqrt(variance)
    dist = stats.norm(mean, sigma)
    middle, _ = integrate.quad(lambda x: x * dist.pdf(x), 0.0, 1.0)
    return middle + 1.0 * (1.0 - dist.cdf(1.0))


class TestPull:
    def test_draw_above_one_clamps(self):
        spec = GaussianArmSpec(mean=1.0, variance=1e-12)

        class HighRng:
            def normal(self, mean, std):
                return 1.2

        assert pull(spec, HighRng()) == 1.0

    def test_zero_variance_returns_mean(self):
        spec = GaussianArmSpec(mean=0.37, variance=0.0)
        rng = rng_substream(0, "pulls")
        assert all(pull(spec, rng) == 0.37 for _ in range(5))

    def test_empirical_mean_matches_quadrature(self):
        spec = GaussianArmSpec(mean=0.5, variance=0.1)
        rng = rng_substream(7, "pulls")
        draws = np.clip(rng.normal(spec.mean, np.sqrt(spec.variance), size=1_000_000), 0, 1)
        assert abs(draws.mean() - clamped_gaussian_mean(0.5, 0.1)) < 0.005

    def test_rewards_always_in_unit_interval(self):
        spec = GaussianArmSpec(mean=0.9, variance=0.5)
        rng = rng_substream(8, "pulls")
        values = [pull(spec, rng) for _ in range(2000)]
        assert min(values) >= 0.0 and max(values) <= 1.0

    def test_fixed_seed_reproduces_stream(self):
        spec = GaussianArmSpec(mean=0.4, variance=0.2)
        first = [pull(spec, rng_substream(3, "s"))for _ in range(1)]
        second = [pull(spec, rng_substream(3, "s")) for _ in range(1)]
        assert first == second


class TestEnvironments:
    def test_grid_means(self):
        env = grid_environment()
        assert env.n_arms == 100
        assert env.arms[0].mean == 0.0
        assert env.arms[99].mean == 0.99
        assert env.best_arm_mean == 0.99
        assert all(arm.variance == 0.1 for arm in env.arms)

    def test_grid_gaps(self):
        env = grid_environment()
        assert env.gaps[99] == 0.0
        assert env.gaps[0] == pytest.approx(0.99)

    def test_needle_smallest_case(self):
        env = needle_environment(2)
        assert [arm.mean for arm in env.arms] == [0.0, 1.0]

    def test_needle_101(self):
        env = needle_environment(101)
        assert env.n_arms == 101
        assert [arm.mean for arm in env.arms[:100]] == [round(i * 0.01, 2) for i in range(100)]
        assert env.arms[-1].mean == 1.0

    def test_needle_large_has_unique_best(self):
        env = needle_environment(11_440)
        means = env.means
        assert means.size == 11_440
        assert (means == 1.0).sum() == 1
        assert env.best_arm == 11_439
        # Cyclic repetition of the 0.00..0.99 grid for the rest.
        assert means[100] == 0.0
        assert means[11_338] == pytest.approx((11_338 % 100) * 0.01)

    def test_mean_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            GaussianArmSpec(mean=1.2, variance=0.1)

    def test_serialization_round_trip(self):
        env = needle_environment(7)
        again = EnvironmentSpec.from_dict(env.to_dict())
        assert again == env


class TestRegret:
    def test_best_arm_only_is_zero(self):
        env = grid_environment(10)
        series = cumulative_regret([9, 9, 9], env)
        np.testing.assert_array_equal(series, [0.0, 0.0, 0.0])

    def test_two_round_example(self):
        env = grid_environment()
        series = cumulative_regret([0, 99], env)
        assert series[0] == pytest.approx(0.99)
        assert series[1] == pytest.approx(0.99)

    def test_count_identity_on_random_sequences(self):
        env = grid_environment(25)
        rng = np.random.default_rng(0)
        for _ in range(20):
            seq = rng.integers(0, 25, size=400)
            series = cumulative_regret(seq, env)
            counts = np.bincount(seq, minlength=25)
            assert series[-1] == pytest.approx(float((counts * env.gaps).sum()))

    def test_bad_index_rejected(self):
        env = grid_environment(10)
        with pytest.raises(ValueError):
            cumulative_regret([0, 10], env)

    def test_pull_arm_bad_index(self):
        env = grid_environment(10)
        with pytest.raises(ValueError):
            pull_arm(env, -1, rng_substream(0, "x"))


class TestClassifyCompetitive:
    def test_constant_low_arm_is_non_competitive(self):
        env = EnvironmentSpec((GaussianArmSpec(0.5, 0.0), GaussianArmSpec(0.3, 0.0)))
        report = classify_competitive(env, horizon=50, trials=10, rng=rng_substream(0, "c"))
        assert report.competitive[0]
        assert not report.competitive[1]
        assert report.gap_estimates[1] == pytest.approx(-0.2)

    def test_best_arm_competitive_in_deterministic_envs(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            means = rng.random(5)
            env = EnvironmentSpec(tuple(GaussianArmSpec(float(m), 0.0) for m in means))
            report = classify_competitive(env, horizon=int(rng.integers(1, 30)),
                                          trials=3, rng=rng_substream(1, "c"))
            assert report.competitive[env.best_arm]

    def test_noisy_mid_arm_beats_higher_mean(self):
        # Running maxes of a mean-0.5 noisy arm blow past a 0.9 best mean
        # over a long horizon.
        env = EnvironmentSpec((GaussianArmSpec(0.9, 0.1), GaussianArmSpec(0.5, 0.1)))
        report = classify_competitive(env, horizon=10_000, trials=1000,
                                      rng=rng_substream(2, "c"))
        assert report.competitive[1]
        assert report.gap_estimates[1] > 0
        assert report.running_max_means[1] > 0.95

    def test_grid_low_arms_non_competitive_at_medium_horizon(self):
        env = grid_environment()
        report = classify_competitive(env, horizon=5000, trials=50,
                                      rng=rng_substream(3, "c"))
        assert not report.competitive[:10].any()
        assert report.competitive[env.best_arm]
        assert set(report.non_competitive_arms.tolist()) >= set(range(10))

    def test_invalid_args(self):
        env = grid_environment(5)
        with pytest.raises(ValueError):
            classify_competitive(env, horizon=0)
        with pytest.raises(ValueError):
            classify_competitive(env, horizon=10, trials=0)
