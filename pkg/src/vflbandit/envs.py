"""Clamped-Gaussian bandit environments and regret analytics.

Rewards are Gaussian draws clamped to [0, 1]. Regret is pseudo-regret
computed from the nominal (unclamped) arm means, which are known to the
simulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRID_STEP = 0.01
GRID_SIZE = 100  # means 0.00, 0.01, ..., 0.99


@dataclass(frozen=True)
class GaussianArmSpec:
    """Nominal mean and variance of one arm's reward distribution."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"arm mean must be in [0, 1], got {self.mean}")
        if self.variance < 0.0:
            raise ValueError(f"arm variance must be non-negative, got {self.variance}")


@dataclass(frozen=True)
class EnvironmentSpec:
    """A fixed set of independent clamped-Gaussian arms."""

    arms: tuple[GaussianArmSpec, ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("environment needs at least one arm")

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def means(self) -> np.ndarray:
        return np.array([arm.mean for arm in self.arms])

    @property
    def variances(self) -> np.ndarray:
        return np.array([arm.variance for arm in self.arms])

    @property
    def best_arm_mean(self) -> float:
        return float(self.means.max())

    @property
    def best_arm(self) -> int:
        return int(self.means.argmax())

    @property
    def gaps(self) -> np.ndarray:
        """Per-arm mean gap to the best arm (all entries >= 0)."""
        return self.best_arm_mean - self.means

    def to_dict(self) -> dict:
        return {
            "means": [arm.mean for arm in self.arms],
            "variances": [arm.variance for arm in self.arms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentSpec":
        means = data["means"]
        variances = data["variances"]
        if len(means) != len(variances):
            raise ValueError("means and variances must have equal length")
        return cls(tuple(GaussianArmSpec(m, v) for m, v in zip(means, variances)))


def pull(spec: GaussianArmSpec, rng: np.random.Generator) -> float:
    """One reward draw: Gaussian with the arm's mean/variance, clamped to [0, 1]."""
    draw = rng.normal(spec.mean, np.sqrt(spec.variance))
    return float(min(1.0, max(0.0, draw)))


def pull_arm(env: EnvironmentSpec, arm: int, rng: np.random.Generator) -> float:
    if arm < 0 or arm >= env.n_arms:
        raise ValueError(f"arm index {arm} out of range [0, {env.n_arms})")
    return pull(env.arms[arm], rng)


def _cyclic_grid_means(count: int) -> list[float]:
    return [round((i % GRID_SIZE) * GRID_STEP, 2) for i in range(count)]


def grid_environment(n_arms: int = GRID_SIZE, variance: float = 0.1) -> EnvironmentSpec:
    """Arms on the uniform mean grid 0.00, 0.01, ..., 0.99 (cycled past 100)."""
    if n_arms < 1:
        raise ValueError("n_arms must be positive")
    return EnvironmentSpec(tuple(GaussianArmSpec(m, variance) for m in _cyclic_grid_means(n_arms)))


def needle_environment(n_arms: int, variance: float = 0.1) -> EnvironmentSpec:
    """A large cyclic mean grid plus a single best arm with mean 1.0.

    The first ``n_arms - 1`` arms repeat the 0.00..0.99 grid cyclically; the
    final arm has mean 1.0 and is the unique best arm.
    """
    if n_arms < 2:
        raise ValueError("n_arms must be at least 2")
    means = _cyclic_grid_means(n_arms - 1) + [1.0]
    return EnvironmentSpec(tuple(GaussianArmSpec(m, variance) for m in means))


def cumulative_regret(arm_sequence, env: EnvironmentSpec) -> np.ndarray:
    """Pseudo-regret series R(t) = sum over rounds of the pulled arm's mean gap."""
    arms = np.asarray(arm_sequence, dtype=int)
    if arms.size and (arms.min() < 0 or arms.max() >= env.n_arms):
        raise ValueError("arm sequence contains out-of-range indices")
    return np.cumsum(env.gaps[arms])


@dataclass(frozen=True)
class CompetitiveReport:
    """Monte Carlo estimate of each arm's horizon-averaged expected running max."""

    competitive: np.ndarray
    gap_estimates: np.ndarray
    running_max_means: np.ndarray

    @property
    def non_competitive_arms(self) -> np.ndarray:
        return np.flatnonzero(~self.competitive)


def classify_competitive(
    env: EnvironmentSpec,
    horizon: int,
    trials: int = 1000,
    rng: np.random.Generator | None = None,
) -> CompetitiveReport:
    """Label each arm competitive or not against the best arm's nominal mean.

    For arm k the statistic is the Monte Carlo estimate of
    ``(1/T) * sum_t E[max of the first t clamped draws]``; the arm is
    competitive when the estimate reaches the best arm's nominal mean.
    The signed difference is returned as the gap estimate. There is no
    closed form for clamped Gaussians, hence the simulation.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if trials < 1:
        raise ValueError("trials must be positive")
    if rng is None:
        rng = np.random.default_rng()
    best_mean = env.best_arm_mean
    estimates = np.empty(env.n_arms)
    # Chunk trials so the (chunk, horizon) draw matrix stays modest.
    chunk = max(1, min(trials, int(32_000_000 // max(horizon, 1))))
    for k, arm in enumerate(env.arms):
        total = 0.0
        done = 0
        while done < trials:
            rows = min(chunk, trials - done)
            draws = rng.normal(arm.mean, np.sqrt(arm.variance), size=(rows, horizon))
            np.clip(draws, 0.0, 1.0, out=draws)
            running_max = np.maximum.accumulate(draws, axis=1)
            total += float(running_max.mean(axis=1).sum())
            done += rows
        estimates[k] = total / trials
    gap_estimates = estimates - best_mean
    # Tolerance absorbs accumulation error for exactly-tied estimates.
    return CompetitiveReport(
        competitive=gap_estimates >= -1e-9,
        gap_estimates=gap_estimates,
        running_max_means=estimates,
    )
