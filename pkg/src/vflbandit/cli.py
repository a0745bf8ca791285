"""Command-line entry points for simulations, sweeps, and self-checks."""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .attack import AttackConfig, attack_batch, eligible_mask, nes_gradient
from .envs import grid_environment, needle_environment
from .experiments import (
    ExperimentConfig,
    PolicySettings,
    TaskSettings,
    exhaustive_pattern_sweep,
    run_attack_experiment,
    run_bandit_experiment,
    sample_eligible_batch,
)
from .manifest import ManifestError, load_manifest, save_manifest
from .nets import DenseNetwork, loss_and_gradients, batch_cross_entropy
from .patterns import format_pattern
from .results import summarize_trials, write_round_records_csv, write_summary_json
from .seeding import rng_substream
from .vfl import DropoutDefense, EmbeddingBundle, NoDefense, QueryServer, SmoothingDefense

OUTPUT_DIR_ENV = "VFLBANDIT_OUTDIR"


def _default_outdir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "results")


def _policy_from_args(args) -> PolicySettings:
    return PolicySettings(
        kind=args.policy,
        warmup_rounds=args.t0,
        forced_pulls_per_arm=args.forced_pulls,
        fixed_arm=args.fixed_arm,
    )


def _seeds_from_args(args) -> tuple[int, ...]:
    return tuple(args.seed + i for i in range(args.trials))


def _add_policy_flags(parser, default_policy="ets"):
    parser.add_argument("--policy", choices=["ts", "ets", "random", "fixed"],
                        default=default_policy)
    parser.add_argument("--t0", type=int, default=0,
                        help="warm-up rounds before candidate filtering")
    parser.add_argument("--forced-pulls", dest="forced_pulls", type=int, default=None,
                        help="round-robin pulls per arm inside the warm-up")
    parser.add_argument("--fixed-arm", dest="fixed_arm", type=int, default=None)
    parser.add_argument("--rounds", type=int, default=1000)
    parser.add_argument("--trials", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0, help="master seed of trial 0")
    parser.add_argument("--out", default=None, help="output directory")


def _add_task_flags(parser):
    parser.add_argument("--clients", type=int, default=6)
    parser.add_argument("--corrupt", type=int, default=2, help="channels corrupted per round")
    parser.add_argument("--client-dim", dest="client_dim", type=int, default=4)
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--weights", default=None,
                        help="comma-separated informativeness weights, one per client")
    parser.add_argument("--top-hidden", dest="top_hidden", type=int, default=32)
    parser.add_argument("--beta", type=float, default=0.3)
    parser.add_argument("--query-limit", dest="query_limit", type=int, default=2000)
    parser.add_argument("--population", type=int, default=50)
    parser.add_argument("--attack-mode", dest="attack_mode",
                        choices=["targeted", "untargeted"], default="targeted")
    parser.add_argument("--label", type=int, default=0,
                        help="target label (targeted) or avoided label (untargeted)")


def _task_from_args(args) -> TaskSettings:
    if args.weights is None:
        weights = tuple(1.0 for _ in range(args.clients))
    else:
        weights = tuple(float(w) for w in args.weights.split(","))
    return TaskSettings(
        n_clients=args.clients,
        per_client_dim=args.client_dim,
        n_classes=args.classes,
        informativeness_weights=weights,
        top_hidden_dim=args.top_hidden,
    )


def _attack_from_args(args) -> AttackConfig:
    return AttackConfig(
        beta=args.beta,
        query_limit=args.query_limit,
        population=args.population,
        mode=args.attack_mode,
        label=args.label,
    )


def _defense_from_args(args):
    if args.defense == "smoothing":
        return SmoothingDefense()
    if args.defense == "dropout":
        return DropoutDefense()
    return NoDefense()


def _write_trials(config: ExperimentConfig, trials, n_arms, outdir: Path, prefix: str):
    outdir.mkdir(parents=True, exist_ok=True)
    for seed, records in trials.items():
        write_round_records_csv(outdir / f"{prefix}_seed{seed}.csv", records)
    summary = summarize_trials(trials, n_arms, config.epoch_rounds, config.mode)
    write_summary_json(outdir / f"{prefix}_summary.json", summary)
    save_manifest(outdir / f"{prefix}_manifest.json", config, str(outdir))
    return summary


def _cmd_bandit_sim(args) -> int:
    if args.manifest:
        config, extras = load_manifest(args.manifest)
    else:
        if args.env == "grid":
            env = grid_environment(args.arms, args.variance)
        else:
            env = needle_environment(args.arms, args.variance)
        config = ExperimentConfig(
            mode="gaussian-bandit",
            policy=_policy_from_args(args),
            rounds=args.rounds,
            environment=env,
            seeds=_seeds_from_args(args),
            epoch_rounds=args.epoch_rounds,
        )
        extras = {"output_dir": None}
    outdir = Path(args.out or extras.get("output_dir") or _default_outdir())
    trials = {seed: run_bandit_experiment(config, seed) for seed in config.seeds}
    summary = _write_trials(config, trials, config.environment.n_arms, outdir, "bandit")
    print(f"wrote {len(trials)} trial CSVs and summary to {outdir}")
    print(f"mean final cumulative regret: {summary['mean_final_cumulative_regret']:.2f}")
    return 0


def _cmd_attack_sim(args) -> int:
    if args.manifest:
        config, extras = load_manifest(args.manifest)
    else:
        config = ExperimentConfig(
            mode="vfl-attack",
            policy=_policy_from_args(args),
            rounds=args.rounds,
            batch_size=args.batch_size,
            corruption_budget=args.corrupt,
            attack=_attack_from_args(args),
            task=_task_from_args(args),
            defense=_defense_from_args(args),
            seeds=_seeds_from_args(args),
            epoch_rounds=args.epoch_rounds,
        )
        extras = {"output_dir": None}
    outdir = Path(args.out or extras.get("output_dir") or _default_outdir())
    trials = {}
    n_arms = None
    for seed in config.seeds:
        result = run_attack_experiment(config, seed)
        trials[seed] = result.records
        n_arms = result.n_arms
    summary = _write_trials(config, trials, n_arms, outdir, "attack")
    final = summary["mean_epoch_reward"][-1]
    print(f"wrote {len(trials)} trial CSVs and summary to {outdir}")
    print(f"final-epoch mean attack success rate: {final:.3f}")
    return 0


def _cmd_sweep(args) -> int:
    task_settings = _task_from_args(args)
    attack = _attack_from_args(args)
    task = task_settings.build(args.seed)
    eligible = np.flatnonzero(eligible_mask(task.clean_predictions, attack))
    batch = sample_eligible_batch(
        eligible, min(args.batch_size, eligible.size), rng_substream(args.seed, "eval-batch")
    )
    sweep = exhaustive_pattern_sweep(task, attack, batch, args.corrupt, args.seed)
    outdir = Path(args.out or _default_outdir())
    outdir.mkdir(parents=True, exist_ok=True)
    table_path = outdir / "sweep.csv"
    with table_path.open("w", encoding="utf-8") as fh:
        fh.write("index,pattern,asr\n")
        for i, (pattern, asr) in enumerate(zip(sweep.patterns, sweep.asr)):
            fh.write(f'{i},"{format_pattern(pattern)}",{asr!r}\n')
    for i, (pattern, asr) in enumerate(zip(sweep.patterns, sweep.asr)):
        marker = " <- best" if i == sweep.best_index else ""
        print(f"{i:4d}  {format_pattern(pattern):<16} {asr:.3f}{marker}")
    print(f"wrote {table_path}")
    return 0


def _cmd_defense_eval(args) -> int:
    task_settings = _task_from_args(args)
    attack = _attack_from_args(args)
    seeds = _seeds_from_args(args)
    defenses = [("none", NoDefense()), ("smoothing", SmoothingDefense()),
                ("dropout", DropoutDefense())]
    per_defense: dict[str, list[float]] = {name: [] for name, _ in defenses}
    for seed in seeds:
        task = task_settings.build(seed)
        eligible = np.flatnonzero(eligible_mask(task.clean_predictions, attack))
        sweep_batch = sample_eligible_batch(
            eligible, min(32, eligible.size), rng_substream(seed, "eval-batch")
        )
        sweep = exhaustive_pattern_sweep(task, attack, sweep_batch, args.corrupt, seed)
        eval_batch = sample_eligible_batch(
            eligible, min(args.batch_size, eligible.size), rng_substream(seed, "defense-batch")
        )
        for name, defense in defenses:
            server = QueryServer(task.model, attack.query_limit, defense=defense,
                                 rng=rng_substream(seed, "defense-rng", name))
            bundles = [
                EmbeddingBundle.from_embeddings(
                    task.model.client_embeddings(task.dataset.client_row(int(i))),
                    sweep.best_pattern, int(i))
                for i in eval_batch
            ]
            asr, _ = attack_batch(bundles, sweep.best_pattern, attack, server,
                                  rng_substream(seed, "defense-attack", name))
            per_defense[name].append(asr)
    summary = {
        "schema_version": 1,
        "seeds": list(seeds),
        "per_defense_asr": per_defense,
        "mean_asr": {name: float(np.mean(values)) for name, values in per_defense.items()},
    }
    outdir = Path(args.out or _default_outdir())
    write_summary_json(Path(outdir) / "defense_eval.json", summary)
    for name, mean in summary["mean_asr"].items():
        print(f"{name:<10} mean final attack success rate: {mean:.3f}")
    return 0


def _cmd_grad_check(args) -> int:
    rng = rng_substream(args.seed, "grad-check")
    worst = 0.0
    for _ in range(5):
        net = DenseNetwork.initialize([4, 6, 3], rng)
        x = rng.standard_normal((8, 4))
        y = rng.integers(0, 3, size=8)
        _, grads = loss_and_gradients(net, x, y)
        step = 1e-6
        for layer, (grad_w, _) in zip(net.layers, grads):
            flat = layer.weights.ravel()
            for index in rng.choice(flat.size, size=6, replace=False):
                original = flat[index]
                flat[index] = original + step
                up = batch_cross_entropy(net, x, y)
                flat[index] = original - step
                down = batch_cross_entropy(net, x, y)
                flat[index] = original
                numeric = (up - down) / (2 * step)
                analytic = grad_w.ravel()[index]
                scale = max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / scale)
    print(f"network gradient check: max relative error {worst:.3e}")

    target = rng.standard_normal(10)
    gradient_errors = []
    for _ in range(100):
        eta = rng.standard_normal(10)
        estimate = nes_gradient(
            lambda c: ((c - target) ** 2).sum(axis=1), eta, 100, 1e-3, 1e9, rng
        )
        true = 2 * (eta - target)
        cosine = float(estimate @ true / (np.linalg.norm(estimate) * np.linalg.norm(true)))
        gradient_errors.append(cosine)
    mean_cosine = float(np.mean(gradient_errors))
    print(f"zeroth-order estimator: mean cosine similarity {mean_cosine:.3f}")
    ok = worst < 1e-4 and mean_cosine >= 0.9
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vflbandit",
        description="Adaptive channel-corruption attack simulations and bandit replications.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bandit = sub.add_parser("bandit-sim", help="synthetic Gaussian-reward bandit runs")
    p_bandit.add_argument("--manifest", default=None, help="JSON manifest path")
    p_bandit.add_argument("--env", choices=["grid", "needle"], default="grid")
    p_bandit.add_argument("--arms", type=int, default=100)
    p_bandit.add_argument("--variance", type=float, default=0.1)
    p_bandit.add_argument("--epoch-rounds", dest="epoch_rounds", type=int, default=25)
    _add_policy_flags(p_bandit)
    p_bandit.set_defaults(func=_cmd_bandit_sim)

    p_attack = sub.add_parser("attack-sim", help="full adaptive corruption pipeline")
    p_attack.add_argument("--manifest", default=None, help="JSON manifest path")
    p_attack.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p_attack.add_argument("--epoch-rounds", dest="epoch_rounds", type=int, default=25)
    p_attack.add_argument("--defense", choices=["none", "smoothing", "dropout"],
                          default="none")
    _add_task_flags(p_attack)
    _add_policy_flags(p_attack)
    p_attack.set_defaults(func=_cmd_attack_sim)

    p_sweep = sub.add_parser("sweep", help="brute-force per-pattern attack table")
    p_sweep.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", default=None)
    _add_task_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_defense = sub.add_parser("defense-eval",
                               help="compare attack success under server defenses")
    p_defense.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p_defense.add_argument("--trials", type=int, default=3)
    p_defense.add_argument("--seed", type=int, default=0)
    p_defense.add_argument("--out", default=None)
    _add_task_flags(p_defense)
    # Inference dropout needs a realistically wide top layer to act as a
    # defense; narrow layers add so much decision noise that random flips
    # help the attacker instead.
    p_defense.set_defaults(func=_cmd_defense_eval, top_hidden=512)

    p_grad = sub.add_parser("grad-check", help="network and estimator self-tests")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(func=_cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
