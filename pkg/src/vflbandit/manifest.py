"""Experiment manifests: a JSON document mirroring ExperimentConfig.

Manifests round-trip losslessly through parse/serialize; unknown keys are
rejected by name so typos surface instead of silently reverting to
defaults.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .attack import AttackConfig
from .envs import EnvironmentSpec, grid_environment, needle_environment
from .experiments import ExperimentConfig, PolicySettings, TaskSettings
from .vfl import Defense, DropoutDefense, NoDefense, SmoothingDefense

MANIFEST_FORMAT_VERSION = 1

_TOP_KEYS = {
    "format_version", "mode", "output_dir", "seeds", "rounds", "batch_size",
    "epoch_rounds", "corruption_budget", "policy", "environment", "task",
    "attack", "defense",
}
_POLICY_KEYS = {"kind", "warmup_rounds", "forced_pulls_per_arm", "fixed_arm"}
_ENV_KEYS = {"name", "n_arms", "variance", "means", "variances"}
_TASK_KEYS = {
    "n_clients", "per_client_dim", "n_classes", "informativeness_weights",
    "samples_per_class", "embedding_dim", "top_hidden_dim",
}
_ATTACK_KEYS = {
    "beta", "query_limit", "population", "nes_scale", "learning_rate",
    "loss_kind", "mode", "label",
}
_DEFENSE_KEYS = {"kind", "noise_std", "noise_factor", "votes", "rate"}


class ManifestError(ValueError):
    """A manifest failed validation; the message names the offending key."""


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ManifestError(f"unknown key {key!r} in {where}")


def _build_environment(section: dict) -> EnvironmentSpec:
    _check_keys(section, _ENV_KEYS, "environment")
    if "means" in section or "variances" in section:
        if "name" in section:
            raise ManifestError("unknown key 'name' in environment (explicit arms given)")
        return EnvironmentSpec.from_dict(section)
    name = section.get("name")
    n_arms = section.get("n_arms", 100)
    variance = section.get("variance", 0.1)
    if name == "grid":
        return grid_environment(n_arms, variance)
    if name == "needle":
        return needle_environment(n_arms, variance)
    raise ManifestError(f"unknown environment name {name!r} (expected 'grid' or 'needle')")


def _environment_section(env: EnvironmentSpec) -> dict:
    return env.to_dict()


def _build_defense(section: dict) -> Defense:
    _check_keys(section, _DEFENSE_KEYS, "defense")
    kind = section.get("kind", "none")
    if kind == "none":
        return NoDefense()
    if kind == "smoothing":
        return SmoothingDefense(
            noise_std=section.get("noise_std"),
            noise_factor=section.get("noise_factor", 0.1),
            votes=section.get("votes", 100),
        )
    if kind == "dropout":
        return DropoutDefense(rate=section.get("rate", 0.3))
    raise ManifestError(f"unknown defense kind {kind!r}")


def parse_manifest(data: dict) -> tuple[ExperimentConfig, dict]:
    """Validate a manifest dictionary and build the experiment config.

    Returns the config plus a dict of extras (currently ``output_dir``).
    """
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    _check_keys(data, _TOP_KEYS, "manifest")
    version = data.get("format_version")
    if version != MANIFEST_FORMAT_VERSION:
        raise ManifestError(
            f"unsupported format_version {version!r} (expected {MANIFEST_FORMAT_VERSION})"
        )
    if "mode" not in data:
        raise ManifestError("missing key 'mode' in manifest")
    policy_section = dict(data.get("policy", {}))
    _check_keys(policy_section, _POLICY_KEYS, "policy")
    policy = PolicySettings(**policy_section)
    environment = None
    if "environment" in data:
        environment = _build_environment(dict(data["environment"]))
    task = None
    if "task" in data:
        task_section = dict(data["task"])
        _check_keys(task_section, _TASK_KEYS, "task")
        if "informativeness_weights" in task_section:
            task_section["informativeness_weights"] = tuple(
                task_section["informativeness_weights"]
            )
        task = TaskSettings(**task_section)
    attack = None
    if "attack" in data:
        attack_section = dict(data["attack"])
        _check_keys(attack_section, _ATTACK_KEYS, "attack")
        attack = AttackConfig(**attack_section)
    defense = _build_defense(dict(data.get("defense", {})))
    config = ExperimentConfig(
        mode=data["mode"],
        policy=policy,
        rounds=data.get("rounds", 1000),
        batch_size=data.get("batch_size", 16),
        corruption_budget=data.get("corruption_budget", 2),
        attack=attack,
        environment=environment,
        task=task,
        defense=defense,
        seeds=tuple(data.get("seeds", (0,))),
        epoch_rounds=data.get("epoch_rounds", 25),
    )
    extras = {"output_dir": data.get("output_dir")}
    return config, extras


def serialize_manifest(config: ExperimentConfig, output_dir: str | None = None) -> dict:
    """Inverse of :func:`parse_manifest` for the config portion."""
    payload: dict = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "mode": config.mode,
        "rounds": config.rounds,
        "batch_size": config.batch_size,
        "corruption_budget": config.corruption_budget,
        "epoch_rounds": config.epoch_rounds,
        "seeds": list(config.seeds),
        "policy": {k: v for k, v in asdict(config.policy).items() if v is not None},
    }
    if output_dir is not None:
        payload["output_dir"] = output_dir
    if config.environment is not None:
        payload["environment"] = _environment_section(config.environment)
    if config.task is not None:
        section = asdict(config.task)
        section["informativeness_weights"] = list(section["informativeness_weights"])
        payload["task"] = section
    if config.attack is not None:
        payload["attack"] = asdict(config.attack)
    defense = config.defense
    if isinstance(defense, SmoothingDefense):
        payload["defense"] = {
            "kind": "smoothing",
            "noise_std": defense.noise_std,
            "noise_factor": defense.noise_factor,
            "votes": defense.votes,
        }
    elif isinstance(defense, DropoutDefense):
        payload["defense"] = {"kind": "dropout", "rate": defense.rate}
    else:
        payload["defense"] = {"kind": "none"}
    return payload


def load_manifest(path) -> tuple[ExperimentConfig, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return parse_manifest(data)


def save_manifest(path, config: ExperimentConfig, output_dir: str | None = None) -> None:
    payload = serialize_manifest(config, output_dir)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
