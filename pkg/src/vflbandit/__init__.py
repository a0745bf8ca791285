"""Adaptive channel corruption of split-model inference.

A bandit policy picks which client-server channels to corrupt each round;
a zeroth-order optimizer crafts the embedding perturbations; synthetic
Gaussian-reward environments replicate the pure-bandit numerical studies.
"""
from .attack import (
    AttackConfig,
    PerturbationState,
    attack_batch,
    attack_loss,
    clamp_linf,
    eligible_mask,
    generate_ae,
    nes_gradient,
)
from .envs import (
    CompetitiveReport,
    EnvironmentSpec,
    GaussianArmSpec,
    classify_competitive,
    cumulative_regret,
    grid_environment,
    needle_environment,
    pull,
    pull_arm,
)
from .experiments import (
    AttackRunResult,
    BatchSamplingError,
    ExperimentConfig,
    PolicySettings,
    PullGrowthReport,
    RoundRecord,
    SweepResult,
    TaskSettings,
    epoch_means,
    exhaustive_pattern_sweep,
    pull_count_growth_report,
    run_attack_experiment,
    run_bandit_experiment,
    sample_eligible_batch,
)
from .nets import (
    DenseNetwork,
    LabeledDataset,
    Layer,
    TrainingError,
    backward_sgd_step,
    load_network,
    margin_loss,
    save_network,
    softmax,
    softmax_cross_entropy,
    train,
)
from .manifest import (
    ManifestError,
    load_manifest,
    parse_manifest,
    save_manifest,
    serialize_manifest,
)
from .patterns import (
    count_patterns,
    format_pattern,
    index_to_pattern,
    parse_pattern,
    pattern_to_index,
    validate_pattern,
)
from .policies import ArmStatistics, BanditPolicy, forced_exploration_schedule
from .seeding import rng_substream
from .vfl import (
    DropoutDefense,
    EmbeddingBundle,
    NoDefense,
    QueryBudgetExceeded,
    QueryServer,
    SmoothingDefense,
    SplitModel,
    SyntheticTask,
    embedding_bounds,
    load_split_model,
    make_synthetic_task,
    save_split_model,
    smoothed_prediction,
    train_split_model,
)

__version__ = "0.1.0"
