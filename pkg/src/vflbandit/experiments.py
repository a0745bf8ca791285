"""Experiment orchestration: the outer bandit loop over corruption patterns.

Two modes share the same policy machinery. In ``gaussian-bandit`` mode the
reward of an arm is a clamped Gaussian draw from a synthetic environment;
in ``vfl-attack`` mode an arm is a corruption pattern, pulling it runs the
zeroth-order attack on a fresh batch of eligible samples and the observed
success rate is fed back as the reward, bit-exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attack import AttackConfig, attack_batch, eligible_mask
from .envs import CompetitiveReport, EnvironmentSpec, classify_competitive, pull_arm
from .patterns import count_patterns, index_to_pattern
from .policies import BanditPolicy
from .seeding import rng_substream
from .vfl import (
    Defense,
    EmbeddingBundle,
    NoDefense,
    QueryServer,
    SyntheticTask,
    make_synthetic_task,
)

EXPERIMENT_MODES = ("gaussian-bandit", "vfl-attack")


@dataclass(frozen=True)
class PolicySettings:
    kind: str = "ts"
    warmup_rounds: int = 0
    forced_pulls_per_arm: int | None = None
    fixed_arm: int | None = None

    def build(self, n_arms: int) -> BanditPolicy:
        return BanditPolicy(
            n_arms,
            kind=self.kind,
            warmup_rounds=self.warmup_rounds,
            forced_pulls_per_arm=self.forced_pulls_per_arm,
            fixed_arm=self.fixed_arm,
        )


@dataclass(frozen=True)
class TaskSettings:
    n_clients: int = 6
    per_client_dim: int = 4
    n_classes: int = 3
    informativeness_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    samples_per_class: int = 160
    embedding_dim: int = 4
    top_hidden_dim: int = 32

    def build(self, seed: int) -> SyntheticTask:
        return make_synthetic_task(
            n_clients=self.n_clients,
            per_client_dim=self.per_client_dim,
            n_classes=self.n_classes,
            informativeness_weights=self.informativeness_weights,
            seed=seed,
            samples_per_class=self.samples_per_class,
            embedding_dim=self.embedding_dim,
            top_hidden_dim=self.top_hidden_dim,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    policy: PolicySettings
    rounds: int
    batch_size: int = 16
    corruption_budget: int = 2
    attack: AttackConfig | None = None
    environment: EnvironmentSpec | None = None
    task: TaskSettings | None = None
    defense: Defense = field(default_factory=NoDefense)
    seeds: tuple[int, ...] = (0,)
    epoch_rounds: int = 25

    def __post_init__(self) -> None:
        if self.mode not in EXPERIMENT_MODES:
            raise ValueError(f"mode must be one of {EXPERIMENT_MODES}")
        if self.rounds < 1:
            raise ValueError("rounds must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.seeds:
            raise ValueError("at least one seed required")
        if self.epoch_rounds < 1:
            raise ValueError("epoch_rounds must be positive")
        if self.mode == "gaussian-bandit" and self.environment is None:
            raise ValueError("gaussian-bandit mode requires an environment")
        if self.mode == "vfl-attack":
            if self.attack is None:
                raise ValueError("vfl-attack mode requires an attack config")
            if self.task is None:
                raise ValueError("vfl-attack mode requires task settings")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    arm: int
    pattern: tuple[int, ...] | None
    reward: float
    candidate_set_size: int
    cumulative_regret: float | None
    queries_used: int | None


def run_bandit_experiment(config: ExperimentConfig, seed: int) -> list[RoundRecord]:
    """One synthetic-bandit trajectory; rewards are clamped Gaussian pulls."""
    if config.mode != "gaussian-bandit":
        raise ValueError("run_bandit_experiment needs gaussian-bandit mode")
    env = config.environment
    policy = config.policy.build(env.n_arms)
    policy_rng = rng_substream(seed, "policy")
    env_rng = rng_substream(seed, "environment")
    gaps = env.gaps
    records: list[RoundRecord] = []
    regret = 0.0
    for t in range(1, config.rounds + 1):
        arm = policy.select_arm(policy_rng)
        reward = pull_arm(env, arm, env_rng)
        policy.update(arm, reward)
        regret += float(gaps[arm])
        records.append(
            RoundRecord(
                round=t,
                arm=arm,
                pattern=None,
                reward=reward,
                candidate_set_size=policy.last_candidate_size,
                cumulative_regret=regret,
                queries_used=None,
            )
        )
    return records


class BatchSamplingError(RuntimeError):
    """Could not assemble an eligible batch within the redraw allowance."""


def sample_eligible_batch(
    eligible_indices: np.ndarray, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``batch_size`` distinct eligible sample indices by redrawing.

    Gives up after ``100 * batch_size`` draws so a thin eligible pool
    surfaces as an error instead of a hang.
    """
    eligible = set(int(i) for i in np.asarray(eligible_indices).ravel())
    if not eligible:
        raise BatchSamplingError("no eligible samples available")
    pool = np.asarray(sorted(eligible))
    chosen: list[int] = []
    seen: set[int] = set()
    for _ in range(100 * batch_size):
        pick = int(pool[rng.integers(pool.size)])
        if pick in seen:
            continue
        seen.add(pick)
        chosen.append(pick)
        if len(chosen) == batch_size:
            return np.asarray(chosen)
    raise BatchSamplingError(
        f"could not draw {batch_size} distinct eligible samples "
        f"from a pool of {pool.size} within {100 * batch_size} draws"
    )


@dataclass
class AttackRunResult:
    records: list[RoundRecord]
    epoch_mean_asr: list[float]
    task: SyntheticTask
    n_arms: int


def _bundles_for(task: SyntheticTask, indices: np.ndarray, pattern) -> list[EmbeddingBundle]:
    bundles = []
    for i in indices:
        embeddings = task.model.client_embeddings(task.dataset.client_row(int(i)))
        bundles.append(EmbeddingBundle.from_embeddings(embeddings, pattern, int(i)))
    return bundles


def run_attack_experiment(config: ExperimentConfig, seed: int) -> AttackRunResult:
    """One full adaptive-corruption trajectory on a freshly built task.

    The task, the batch draws, the policy draws, the per-round attack
    noise and the defense noise all come from distinct labelled substreams
    of ``seed``, so two policies run with the same seed see identical
    tasks and batches.
    """
    if config.mode != "vfl-attack":
        raise ValueError("run_attack_experiment needs vfl-attack mode")
    task = config.task.build(seed)
    n_arms = count_patterns(config.task.n_clients, config.corruption_budget)
    policy = config.policy.build(n_arms)
    policy_rng = rng_substream(seed, "policy")
    batch_rng = rng_substream(seed, "batches")
    eligible = np.flatnonzero(eligible_mask(task.clean_predictions, config.attack))
    if eligible.size == 0:
        counts = np.bincount(task.clean_predictions, minlength=task.dataset.n_classes)
        raise BatchSamplingError(
            f"no eligible samples for mode={config.attack.mode!r} "
            f"label={config.attack.label}; clean prediction counts={counts.tolist()}"
        )
    records: list[RoundRecord] = []
    for t in range(1, config.rounds + 1):
        batch = sample_eligible_batch(eligible, config.batch_size, batch_rng)
        arm = policy.select_arm(policy_rng)
        pattern = index_to_pattern(arm, config.task.n_clients, config.corruption_budget)
        server = QueryServer(
            task.model,
            config.attack.query_limit,
            defense=config.defense,
            rng=rng_substream(seed, "defense", t),
        )
        bundles = _bundles_for(task, batch, pattern)
        asr, states = attack_batch(
            bundles, pattern, config.attack, server, rng_substream(seed, "attack", t)
        )
        policy.update(arm, asr)
        records.append(
            RoundRecord(
                round=t,
                arm=arm,
                pattern=pattern,
                reward=asr,
                candidate_set_size=policy.last_candidate_size,
                cumulative_regret=None,
                queries_used=sum(state.queries_used for state in states),
            )
        )
    epochs = epoch_means([r.reward for r in records], config.epoch_rounds)
    return AttackRunResult(records, epochs, task, n_arms)


def epoch_means(rewards: Sequence[float], epoch_rounds: int) -> list[float]:
    """Window-averaged rewards, one value per test epoch (last window may be short)."""
    rewards = list(rewards)
    return [
        float(np.mean(rewards[start:start + epoch_rounds]))
        for start in range(0, len(rewards), epoch_rounds)
    ]


@dataclass
class SweepResult:
    patterns: list[tuple[int, ...]]
    asr: np.ndarray
    best_index: int

    @property
    def best_pattern(self) -> tuple[int, ...]:
        return self.patterns[self.best_index]

    @property
    def best_asr(self) -> float:
        return float(self.asr[self.best_index])

    @property
    def best_indices(self) -> list[int]:
        """All argmax-tied pattern indices."""
        top = self.asr.max()
        return [i for i, value in enumerate(self.asr) if value == top]


def exhaustive_pattern_sweep(
    task: SyntheticTask,
    attack_config: AttackConfig,
    eval_indices: np.ndarray,
    corruption_budget: int,
    seed: int,
    defense: Defense = NoDefense(),
) -> SweepResult:
    """Attack one shared evaluation batch once per corruption pattern.

    This is the brute-force oracle the bandit is judged against: the full
    ASR table plus the argmax pattern (ties resolve to the smallest index).
    """
    n_clients = task.model.n_clients
    n_arms = count_patterns(n_clients, corruption_budget)
    patterns = []
    scores = np.empty(n_arms)
    for index in range(n_arms):
        pattern = index_to_pattern(index, n_clients, corruption_budget)
        server = QueryServer(
            task.model,
            attack_config.query_limit,
            defense=defense,
            rng=rng_substream(seed, "sweep-defense", index),
        )
        bundles = _bundles_for(task, np.asarray(eval_indices), pattern)
        asr, _ = attack_batch(
            bundles, pattern, attack_config, server, rng_substream(seed, "sweep", index)
        )
        patterns.append(pattern)
        scores[index] = asr
    return SweepResult(patterns, scores, int(np.argmax(scores)))


@dataclass
class PullGrowthReport:
    """Per-arm pull counts at horizon checkpoints, split by competitiveness."""

    checkpoints: tuple[int, int, int]  # T//4, T//2, T
    pulls_at: np.ndarray  # (3, n_arms) cumulative counts
    classification: CompetitiveReport

    @property
    def first_half_pulls(self) -> np.ndarray:
        return self.pulls_at[1]

    @property
    def second_half_pulls(self) -> np.ndarray:
        return self.pulls_at[2] - self.pulls_at[1]

    def plateau_holds(self, arms: np.ndarray | None = None) -> bool:
        """Whether the selected arms' pulls in (T/2, T] stay within (0, T/2]."""
        if arms is None:
            arms = self.classification.non_competitive_arms
        arms = np.asarray(arms, dtype=int)
        if arms.size == 0:
            return True
        return float(self.second_half_pulls[arms].mean()) <= float(
            self.first_half_pulls[arms].mean()
        )


def pull_count_growth_report(
    records: Sequence[RoundRecord],
    env: EnvironmentSpec,
    classification: CompetitiveReport | None = None,
    trials: int = 1000,
    rng: np.random.Generator | None = None,
) -> PullGrowthReport:
    """Summarize how pull counts grow, for eyeballing O(1) vs O(log T) arms."""
    arms = np.asarray([record.arm for record in records], dtype=int)
    horizon = len(arms)
    if horizon < 4:
        raise ValueError("need at least 4 rounds for checkpoints")
    if classification is None:
        classification = classify_competitive(env, horizon, trials=trials, rng=rng)
    checkpoints = (horizon // 4, horizon // 2, horizon)
    pulls_at = np.stack(
        [np.bincount(arms[:point], minlength=env.n_arms) for point in checkpoints]
    )
    return PullGrowthReport(checkpoints, pulls_at, classification)
