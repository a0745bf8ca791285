"""Arm-selection policies and the per-arm statistics they maintain.

Four policy kinds are provided:

* ``"ts"``      - Gaussian Thompson sampling over every arm, every round.
* ``"ets"``     - empirical-max Thompson sampling: after a warm-up phase,
                  sampling is restricted to arms whose running average of
                  the per-pull running-max reward reaches the empirical
                  best arm's mean estimate.
* ``"random"``  - uniform arm each round.
* ``"fixed"``   - always the configured arm.

Each arm's sampling distribution is a Gaussian with mean equal to the
arm's reward average and variance ``1 / (pulls + 1)`` (a variance, not a
standard deviation). All argmax ties break toward the smallest arm index
so trajectories are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POLICY_KINDS = ("ts", "ets", "random", "fixed")


@dataclass(frozen=True)
class ArmStatistics:
    """Snapshot of one arm's running state."""

    pulls: int
    mean_estimate: float
    posterior_variance: float
    running_max: float
    empirical_max_reward: float


def forced_exploration_schedule(n_arms: int, warmup_rounds: int, pulls_per_arm: int) -> list[int]:
    """Round-robin prefix giving each arm exactly ``pulls_per_arm`` pulls.

    The prefix must fit inside the warm-up phase; the remaining warm-up
    rounds fall back to plain Thompson sampling. ``pulls_per_arm == 0``
    disables forcing and returns an empty schedule.
    """
    if n_arms < 1:
        raise ValueError("n_arms must be positive")
    if pulls_per_arm < 0:
        raise ValueError(f"pulls_per_arm must be non-negative, got {pulls_per_arm}")
    if pulls_per_arm == 0:
        return []
    needed = pulls_per_arm * n_arms
    if warmup_rounds < needed:
        raise ValueError(
            f"forced exploration needs warmup_rounds >= {needed}, got {warmup_rounds}"
        )
    return [arm for _ in range(pulls_per_arm) for arm in range(n_arms)]


class BanditPolicy:
    """Sequential arm-selection state for one trajectory.

    The global round counter starts at 1 and advances on every update, so
    at the start of round t the pull counts sum to t - 1.

    Parameters
    ----------
    n_arms:
        Number of arms.
    kind:
        One of :data:`POLICY_KINDS`.
    warmup_rounds:
        Rounds during which ``"ets"`` behaves as plain Thompson sampling
        over the full arm set. Ignored by other kinds except for forced
        exploration validation.
    forced_pulls_per_arm:
        Length of the round-robin prefix per arm inside the warm-up. The
        default is 2 for ``"ets"`` (so every arm's statistics are seeded
        before the candidate filter activates) and 0 otherwise.
    fixed_arm:
        Arm returned by the ``"fixed"`` kind.
    """

    def __init__(
        self,
        n_arms: int,
        kind: str = "ts",
        warmup_rounds: int = 0,
        forced_pulls_per_arm: int | None = None,
        fixed_arm: int | None = None,
    ) -> None:
        if n_arms < 1:
            raise ValueError("n_arms must be positive")
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
        if warmup_rounds < 0:
            raise ValueError("warmup_rounds must be non-negative")
        if kind == "fixed":
            if fixed_arm is None:
                raise ValueError("fixed policy requires fixed_arm")
            if not 0 <= fixed_arm < n_arms:
                raise ValueError(f"fixed_arm {fixed_arm} out of range [0, {n_arms})")
        if forced_pulls_per_arm is None:
            forced_pulls_per_arm = 2 if kind == "ets" else 0
        self.n_arms = n_arms
        self.kind = kind
        self.warmup_rounds = warmup_rounds
        self.fixed_arm = fixed_arm
        self.forced_pulls_per_arm = forced_pulls_per_arm
        if kind in ("ts", "ets"):
            self._forced = forced_exploration_schedule(n_arms, warmup_rounds, forced_pulls_per_arm)
        else:
            self._forced = []
        self.round = 1
        self.pulls = np.zeros(n_arms, dtype=np.int64)
        self.mean_estimates = np.zeros(n_arms)
        self.posterior_variances = np.ones(n_arms)
        self.running_maxes = np.zeros(n_arms)
        self.empirical_max_rewards = np.zeros(n_arms)
        self.last_candidate_size = n_arms if kind != "fixed" else 1

    def arm_statistics(self, arm: int) -> ArmStatistics:
        return ArmStatistics(
            pulls=int(self.pulls[arm]),
            mean_estimate=float(self.mean_estimates[arm]),
            posterior_variance=float(self.posterior_variances[arm]),
            running_max=float(self.running_maxes[arm]),
            empirical_max_reward=float(self.empirical_max_rewards[arm]),
        )

    @property
    def total_pulls(self) -> int:
        return int(self.pulls.sum())

    def candidate_set(self) -> np.ndarray:
        """Arm indices eligible for sampling this round (sorted, non-empty).

        For ``"ets"`` past the warm-up: restrict to fully explored arms
        (pull count at least (t-1)/N), take the best mean estimate among
        them as threshold, and keep every arm whose empirical maximum
        reward reaches it. An empty fully-explored set falls back to the
        full arm set, which reverts the round to plain Thompson sampling.
        """
        if self.kind == "fixed":
            return np.array([self.fixed_arm], dtype=int)
        if self.kind in ("ts", "random") or self.round <= self.warmup_rounds:
            return np.arange(self.n_arms)
        threshold_pulls = (self.round - 1) / self.n_arms
        explored = np.flatnonzero(self.pulls >= threshold_pulls)
        if explored.size == 0:
            return np.arange(self.n_arms)
        best_mean = self.mean_estimates[explored].max()
        candidates = np.flatnonzero(self.empirical_max_rewards >= best_mean)
        if candidates.size == 0:  # unreachable: the empirical best arm qualifies
            return np.arange(self.n_arms)
        return candidates

    def select_arm(self, rng: np.random.Generator) -> int:
        """Pick this round's arm; records the candidate-set size used."""
        if self.round <= len(self._forced):
            self.last_candidate_size = self.n_arms
            return self._forced[self.round - 1]
        if self.kind == "fixed":
            self.last_candidate_size = 1
            return int(self.fixed_arm)
        if self.kind == "random":
            self.last_candidate_size = self.n_arms
            return int(rng.integers(self.n_arms))
        candidates = self.candidate_set()
        self.last_candidate_size = int(candidates.size)
        sigma = np.sqrt(self.posterior_variances[candidates])
        theta = self.mean_estimates[candidates] + sigma * rng.standard_normal(candidates.size)
        return int(candidates[np.argmax(theta)])

    def update(self, arm: int, reward: float) -> None:
        """Fold one observed reward into the arm's statistics and advance the round."""
        if not 0 <= arm < self.n_arms:
            raise ValueError(f"arm index {arm} out of range [0, {self.n_arms})")
        reward = float(reward)
        if not 0.0 <= reward <= 1.0:
            raise ValueError(f"reward must be in [0, 1], got {reward}")
        n = int(self.pulls[arm]) + 1
        self.pulls[arm] = n
        self.mean_estimates[arm] = (self.mean_estimates[arm] * (n - 1) + reward) / n
        self.posterior_variances[arm] = 1.0 / (n + 1)
        # Running max first: its new value feeds this round's average.
        self.running_maxes[arm] = max(self.running_maxes[arm], reward)
        self.empirical_max_rewards[arm] = (
            self.empirical_max_rewards[arm] * (n - 1) + self.running_maxes[arm]
        ) / n
        self.round += 1
