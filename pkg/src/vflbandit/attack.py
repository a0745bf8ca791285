"""Zeroth-order adversarial perturbation of corrupted embedding channels.

The attacker never sees gradients: it estimates them from loss values at
Gaussian-perturbed candidates (antithetic pairs) and takes projected
descent steps, keeping the perturbation inside the per-sample box
``|eta|_inf <= beta * (ub - lb)`` at every query the server observes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .vfl import EmbeddingBundle, QueryServer

LOSS_KINDS = ("cross-entropy", "margin")
ATTACK_MODES = ("targeted", "untargeted")

_PROB_FLOOR = 1e-300  # keeps losses finite for exact-zero entries (one-hot votes)


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of the per-sample perturbation search.

    ``nes_scale`` and ``learning_rate`` are relative to the sample's
    embedding value range: the candidate spread is ``nes_scale * (ub - lb)``
    and the descent step ``learning_rate * (ub - lb)``.
    """

    beta: float
    query_limit: int
    population: int = 50
    nes_scale: float = 0.001
    learning_rate: float = 0.02
    loss_kind: str = "cross-entropy"
    mode: str = "targeted"
    label: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.query_limit < 1:
            raise ValueError("query_limit must be positive")
        if self.population < 2 or self.population % 2 != 0:
            raise ValueError("population must be even and at least 2 (antithetic pairs)")
        if self.nes_scale <= 0:
            raise ValueError("nes_scale must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"mode must be one of {ATTACK_MODES}")
        if self.label < 0:
            raise ValueError("label must be a class index")


@dataclass
class PerturbationState:
    """Result of one per-sample attack: final perturbation and accounting."""

    eta: np.ndarray
    queries_used: int
    success: bool


def attack_loss(probs: np.ndarray, config: AttackConfig) -> np.ndarray | float:
    """Attack objective from a probability vector (c,) or batch (k, c).

    Targeted mode returns the loss toward the target label (to minimize);
    untargeted mode returns its negation on the avoided label, so descent
    pushes probability mass away from it.
    """
    probs = np.asarray(probs, dtype=float)
    single = probs.ndim == 1
    p = probs.reshape(1, -1) if single else probs
    log_p = np.log(np.maximum(p, _PROB_FLOOR))
    if config.loss_kind == "cross-entropy":
        base = -log_p[:, config.label]
    else:
        rivals = log_p.copy()
        rivals[:, config.label] = -np.inf
        base = rivals.max(axis=1) - log_p[:, config.label]
    loss = base if config.mode == "targeted" else -base
    return float(loss[0]) if single else loss


def attack_succeeded(probs: np.ndarray, config: AttackConfig) -> bool:
    predicted = int(np.argmax(probs))
    if config.mode == "targeted":
        return predicted == config.label
    return predicted != config.label


def clamp_linf(eta: np.ndarray, bound: float) -> np.ndarray:
    """Project onto the box ``|eta|_inf <= bound`` elementwise."""
    if bound < 0:
        raise ValueError(f"bound must be non-negative, got {bound}")
    return np.clip(np.asarray(eta, dtype=float), -bound, bound)


def nes_gradient(
    loss_oracle: Callable[[np.ndarray], np.ndarray],
    eta: np.ndarray,
    population: int,
    sigma: float,
    bound: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Antithetic Gaussian gradient estimate of the loss at ``eta``.

    Draws ``population/2`` standard normal directions and their mirrors,
    evaluates the loss at the clamped points ``eta + sigma * delta`` (one
    oracle row per candidate, each costing one server query), and returns
    ``(1 / (sigma * population)) * sum_j delta_j * L_j``. Clamping keeps
    every query feasible but biases the estimate where the box binds.
    """
    if population < 2 or population % 2 != 0:
        raise ValueError("population must be even and at least 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    eta = np.asarray(eta, dtype=float)
    half = rng.standard_normal((population // 2, eta.size))
    deltas = np.concatenate([half, -half], axis=0)
    candidates = clamp_linf(eta[None, :] + sigma * deltas, bound)
    losses = np.asarray(loss_oracle(candidates), dtype=float)
    if losses.shape != (population,):
        raise ValueError(f"loss oracle returned shape {losses.shape}, expected ({population},)")
    return (deltas * losses[:, None]).sum(axis=0) / (sigma * population)


def generate_ae(
    bundle: EmbeddingBundle,
    pattern: Sequence[int],
    config: AttackConfig,
    server: QueryServer,
    rng: np.random.Generator,
) -> PerturbationState:
    """Search for a perturbation of one sample's corrupted channels.

    Each iteration submits the current perturbed embedding once (the
    success check) and, if the attack has not landed, spends ``population``
    queries on a gradient estimate followed by a projected descent step.
    Iterations are capped at ``query_limit // population`` and the run
    stops early once fewer than ``population + 1`` queries remain, so the
    per-sample total never exceeds the budget. A zero perturbation box
    (beta or the value range is zero) gives up after the initial check.
    """
    h_adv = bundle.adversarial_part
    value_range = bundle.upper_bound - bundle.lower_bound
    bound = config.beta * value_range
    sigma = config.nes_scale * value_range
    step = config.learning_rate * value_range
    start_used = server.queries_used(bundle.sample_id)
    # Budget against whichever is tighter: the configured allowance or what
    # the server will still serve for this sample.
    budget = min(config.query_limit, server.remaining(bundle.sample_id))

    def used() -> int:
        return server.queries_used(bundle.sample_id) - start_used

    def oracle(candidates: np.ndarray) -> np.ndarray:
        peak = float(np.abs(candidates).max()) if candidates.size else 0.0
        if peak > bound * (1.0 + 1e-9) + 1e-15:
            raise RuntimeError(
                f"infeasible candidate observed: |eta|_inf={peak} > bound={bound}"
            )
        probs = server.predict(
            h_adv[None, :] + candidates, bundle.benign_part, pattern, bundle.sample_id
        )
        return attack_loss(probs, config)

    eta = np.zeros_like(h_adv)
    success = False
    max_iterations = config.query_limit // config.population
    for _ in range(max_iterations):
        if budget - used() < config.population + 1:
            break
        eta = clamp_linf(eta, bound)
        probs = server.predict(h_adv + eta, bundle.benign_part, pattern, bundle.sample_id)
        if attack_succeeded(probs, config):
            success = True
            break
        if bound == 0.0:
            break
        gradient = nes_gradient(oracle, eta, config.population, sigma, bound, rng)
        eta = eta - step * gradient
    eta = clamp_linf(eta, bound)
    return PerturbationState(eta=eta, queries_used=used(), success=success)


def eligible_mask(clean_predictions: np.ndarray, config: AttackConfig) -> np.ndarray:
    """Samples worth attacking: targeted wants predictions != label, untargeted == label."""
    clean_predictions = np.asarray(clean_predictions, dtype=int)
    if config.mode == "targeted":
        return clean_predictions != config.label
    return clean_predictions == config.label


def attack_batch(
    bundles: Sequence[EmbeddingBundle],
    pattern: Sequence[int],
    config: AttackConfig,
    server: QueryServer,
    rng: np.random.Generator,
) -> tuple[float, list[PerturbationState]]:
    """Attack each sample independently; the success rate is the mean.

    Bundles must already be filtered to eligible samples; each sample gets
    the full per-sample query budget. Per-sample noise comes from spawned
    substreams, so the result is independent of execution order.
    """
    if not bundles:
        raise ValueError("attack_batch requires a non-empty eligible batch")
    states = [
        generate_ae(bundle, pattern, config, server, sample_rng)
        for bundle, sample_rng in zip(bundles, rng.spawn(len(bundles)))
    ]
    asr = sum(state.success for state in states) / len(states)
    return asr, states
