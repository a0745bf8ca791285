"""Split-model inference: client embeddings, server prediction, defenses.

The protocol is simulated in process. Each of M clients owns a bottom
network that maps its feature slice to an embedding; the server
concatenates all embeddings in client order and runs its top network. An
attacker who corrupts a set of client-server channels submits perturbed
embedding slices for exactly those clients; the server reassembles the
full embedding, applies the configured defense, and returns a probability
vector. Queries are counted per sample and capped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .nets import DenseNetwork, LabeledDataset, TrainingError, softmax
from .patterns import validate_pattern
from .seeding import rng_substream


class QueryBudgetExceeded(RuntimeError):
    """The per-sample query budget is exhausted; the attack must stop."""


@dataclass(frozen=True)
class NoDefense:
    kind: str = "none"


@dataclass(frozen=True)
class SmoothingDefense:
    """Majority vote over noisy predictions.

    ``noise_std`` is the absolute Gaussian noise scale; when ``None`` it is
    resolved per query as ``noise_factor * (ub - lb)`` of the submitted
    adversarial slice (the range the perturbation budget is defined on).
    The full vote loop costs the client a single query.
    """

    noise_std: float | None = None
    noise_factor: float = 0.1
    votes: int = 100
    kind: str = "smoothing"

    def __post_init__(self) -> None:
        if self.votes < 1:
            raise ValueError("votes must be positive")
        if self.noise_std is not None and self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class DropoutDefense:
    """Inference-time dropout on the top model's hidden layers, resampled per query."""

    rate: float = 0.3
    kind: str = "dropout"

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")


Defense = NoDefense | SmoothingDefense | DropoutDefense


class SplitModel:
    """M client bottom networks plus one server top network."""

    def __init__(self, bottom_models: Sequence[DenseNetwork], top_model: DenseNetwork) -> None:
        bottom_models = list(bottom_models)
        if not bottom_models:
            raise ValueError("split model needs at least one client")
        total = sum(net.output_dim for net in bottom_models)
        if total != top_model.input_dim:
            raise ValueError(
                f"concatenated embedding width {total} != top input width {top_model.input_dim}"
            )
        self.bottom_models = bottom_models
        self.top_model = top_model

    @property
    def n_clients(self) -> int:
        return len(self.bottom_models)

    @property
    def embedding_dims(self) -> list[int]:
        return [net.output_dim for net in self.bottom_models]

    @property
    def n_classes(self) -> int:
        return self.top_model.output_dim

    def client_embeddings(self, features_by_client: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Per-client forward pass; each client sees only its own features."""
        if len(features_by_client) != self.n_clients:
            raise ValueError("one feature block per client required")
        return [net.forward(x) for net, x in zip(self.bottom_models, features_by_client)]

    def full_embedding(self, features_by_client: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate(self.client_embeddings(features_by_client), axis=-1)

    def predict_full(self, embedding: np.ndarray) -> np.ndarray:
        """Defense-free softmax prediction from a full embedding (d,) or (n, d)."""
        return softmax(self.top_model.forward(embedding))

    def predict_clean(self, features_by_client: Sequence[np.ndarray]) -> np.ndarray:
        return self.predict_full(self.full_embedding(features_by_client))


def embedding_bounds(h_adversarial: np.ndarray) -> tuple[float, float]:
    """Smallest and largest element of an adversarial embedding slice."""
    values = np.asarray(h_adversarial, dtype=float)
    if values.size == 0:
        raise ValueError("cannot bound an empty embedding slice")
    return float(values.min()), float(values.max())


@dataclass(frozen=True)
class EmbeddingBundle:
    """One sample's embeddings split into corrupted and untouched channels.

    ``adversarial_part`` concatenates the corrupted clients' embeddings in
    pattern order; ``benign_part`` concatenates the rest in client order.
    The bounds are the extreme elements of the adversarial part, computed
    per sample and never cached across samples.
    """

    adversarial_part: np.ndarray
    benign_part: np.ndarray
    lower_bound: float
    upper_bound: float
    sample_id: int

    @classmethod
    def from_embeddings(
        cls, embeddings: Sequence[np.ndarray], pattern: Sequence[int], sample_id: int
    ) -> "EmbeddingBundle":
        pattern = validate_pattern(pattern, len(embeddings))
        corrupted = set(pattern)
        adversarial = np.concatenate([embeddings[c - 1] for c in pattern])
        benign_blocks = [
            embeddings[m] for m in range(len(embeddings)) if (m + 1) not in corrupted
        ]
        benign = (
            np.concatenate(benign_blocks) if benign_blocks else np.empty(0)
        )
        lb, ub = embedding_bounds(adversarial)
        return cls(adversarial, benign, lb, ub, sample_id)


@lru_cache(maxsize=256)
def _reassembly_positions(
    pattern: tuple[int, ...], embedding_dims: tuple[int, ...]
) -> tuple[np.ndarray, np.ndarray]:
    """Output positions of the adversarial and benign slice elements."""
    corrupted = set(pattern)
    offsets = np.concatenate([[0], np.cumsum(embedding_dims)])
    adv_positions = np.concatenate(
        [np.arange(offsets[c - 1], offsets[c]) for c in pattern]
    ).astype(int)
    benign_positions = np.concatenate(
        [
            np.arange(offsets[m - 1], offsets[m])
            for m in range(1, len(embedding_dims) + 1)
            if m not in corrupted
        ]
        or [np.empty(0, dtype=int)]
    ).astype(int)
    return adv_positions, benign_positions


def reassemble_embedding(
    h_adversarial: np.ndarray,
    h_benign: np.ndarray,
    pattern: Sequence[int],
    embedding_dims: Sequence[int],
) -> np.ndarray:
    """Interleave adversarial and benign slices back into client order.

    Accepts a single slice (d,) or a batch (k, d) of adversarial slices
    against one benign slice.
    """
    pattern = validate_pattern(pattern, len(embedding_dims))
    h_adversarial = np.asarray(h_adversarial, dtype=float)
    h_benign = np.asarray(h_benign, dtype=float)
    single = h_adversarial.ndim == 1
    adv = h_adversarial.reshape(1, -1) if single else h_adversarial
    adv_positions, benign_positions = _reassembly_positions(pattern, tuple(embedding_dims))
    if adv.shape[1] != adv_positions.size:
        raise ValueError(
            f"adversarial slice width {adv.shape[1]} != expected {adv_positions.size}"
        )
    if h_benign.shape != (benign_positions.size,):
        raise ValueError(
            f"benign slice shape {h_benign.shape} != expected ({benign_positions.size},)"
        )
    full = np.empty((adv.shape[0], sum(embedding_dims)))
    full[:, adv_positions] = adv
    full[:, benign_positions] = h_benign
    return full[0] if single else full


def smoothed_prediction(
    model: SplitModel,
    embedding: np.ndarray,
    noise_std: float,
    votes: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Majority vote over ``votes`` noisy predictions of one full embedding.

    Returns a one-hot probability vector for the winning class; ties break
    toward the smallest class index. Zero noise reduces to the plain
    prediction's argmax.
    """
    embedding = np.asarray(embedding, dtype=float)
    if embedding.ndim != 1:
        raise ValueError("smoothed_prediction expects a single embedding")
    if noise_std == 0.0:
        probs = model.predict_full(embedding)
        winner = int(np.argmax(probs))
    else:
        noisy = embedding + rng.normal(0.0, noise_std, size=(votes, embedding.size))
        votes_per_class = np.bincount(
            model.predict_full(noisy).argmax(axis=1), minlength=model.n_classes
        )
        winner = int(np.argmax(votes_per_class))
    one_hot = np.zeros(model.n_classes)
    one_hot[winner] = 1.0
    return one_hot


class QueryServer:
    """Serves predictions for perturbed embeddings under a query budget.

    One attack loop owns one server instance; counters are per sample id
    and a query that would push a sample past the limit raises
    :class:`QueryBudgetExceeded` without being served.
    """

    def __init__(
        self,
        model: SplitModel,
        query_limit: int,
        defense: Defense = NoDefense(),
        rng: np.random.Generator | None = None,
    ) -> None:
        if query_limit < 1:
            raise ValueError("query_limit must be positive")
        self.model = model
        self.query_limit = query_limit
        self.defense = defense
        self._rng = rng if rng is not None else np.random.default_rng()
        self._counts: dict[int, int] = {}

    def queries_used(self, sample_id: int) -> int:
        return self._counts.get(sample_id, 0)

    def remaining(self, sample_id: int) -> int:
        return self.query_limit - self.queries_used(sample_id)

    def predict(
        self,
        h_adversarial: np.ndarray,
        h_benign: np.ndarray,
        pattern: Sequence[int],
        sample_id: int,
    ) -> np.ndarray:
        """Serve one query per adversarial row; returns (c,) or (k, c) probabilities."""
        h_adversarial = np.asarray(h_adversarial, dtype=float)
        single = h_adversarial.ndim == 1
        rows = 1 if single else h_adversarial.shape[0]
        used = self.queries_used(sample_id)
        if used + rows > self.query_limit:
            raise QueryBudgetExceeded(
                f"sample {sample_id}: {used} used + {rows} requested > limit {self.query_limit}"
            )
        full = reassemble_embedding(
            h_adversarial, h_benign, pattern, self.model.embedding_dims
        )
        batch = full.reshape(1, -1) if single else full
        if isinstance(self.defense, SmoothingDefense):
            if self.defense.noise_std is not None:
                std = self.defense.noise_std
            else:
                adv = h_adversarial.reshape(rows, -1)
                std = self.defense.noise_factor * float(adv.max() - adv.min())
            probs = self._smoothed_rows(batch, std)
        elif isinstance(self.defense, DropoutDefense):
            logits = self.model.top_model.forward(
                batch, dropout_rate=self.defense.rate, rng=self._rng
            )
            probs = softmax(logits)
        else:
            probs = self.model.predict_full(batch)
        self._counts[sample_id] = used + rows
        return probs[0] if single else probs

    def _smoothed_rows(self, batch: np.ndarray, std: float) -> np.ndarray:
        """Vectorized majority vote: all rows and votes in one top-model pass."""
        rows, width = batch.shape
        votes = self.defense.votes
        if std == 0.0:
            winners = self.model.predict_full(batch).argmax(axis=1)
        else:
            noisy = batch[:, None, :] + self._rng.normal(0.0, std, size=(rows, votes, width))
            classes = self.model.predict_full(noisy.reshape(rows * votes, width)).argmax(axis=1)
            counts = np.zeros((rows, self.model.n_classes), dtype=int)
            row_index = np.repeat(np.arange(rows), votes)
            np.add.at(counts, (row_index, classes), 1)
            winners = counts.argmax(axis=1)
        probs = np.zeros((rows, self.model.n_classes))
        probs[np.arange(rows), winners] = 1.0
        return probs

    def smoothed_predict(self, embedding: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Smoothing vote on a full embedding using this server's defense settings."""
        defense = self.defense
        if not isinstance(defense, SmoothingDefense):
            defense = SmoothingDefense()
        embedding = np.asarray(embedding, dtype=float)
        if defense.noise_std is not None:
            std = defense.noise_std
        else:
            std = defense.noise_factor * float(embedding.max() - embedding.min())
        return smoothed_prediction(self.model, embedding, std, defense.votes, rng)


@dataclass
class SyntheticTask:
    """A generated dataset plus the split model trained on it."""

    dataset: LabeledDataset
    model: SplitModel
    train_accuracy: float
    clean_predictions: np.ndarray  # defense-free predicted class per sample


def split_forward_trace(model: SplitModel, features_by_client: Sequence[np.ndarray]):
    bottom_traces = [
        net.forward_trace(x) for net, x in zip(model.bottom_models, features_by_client)
    ]
    embedding = np.concatenate([trace[-1] for trace in bottom_traces], axis=1)
    top_trace = model.top_model.forward_trace(embedding)
    return bottom_traces, top_trace


def train_split_model(
    model: SplitModel,
    dataset: LabeledDataset,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = 32,
) -> float:
    """Joint SGD over bottoms and top via backprop through the concatenation."""
    dims = model.embedding_dims
    splits = np.cumsum(dims)[:-1]
    y_all = dataset.labels
    for _ in range(epochs):
        order = rng.permutation(dataset.n_samples)
        for start in range(0, dataset.n_samples, batch_size):
            idx = order[start:start + batch_size]
            blocks = [block[idx] for block in dataset.features_by_client]
            y = y_all[idx]
            bottom_traces, top_trace = split_forward_trace(model, blocks)
            probs = softmax(top_trace[-1])
            grad_logits = probs
            grad_logits[np.arange(len(y)), y] -= 1.0
            grad_logits /= len(y)
            top_grads, grad_embedding = model.top_model.backward_from_trace(
                top_trace, grad_logits
            )
            model.top_model.apply_gradients(top_grads, lr)
            for net, trace, grad_slice in zip(
                model.bottom_models, bottom_traces, np.split(grad_embedding, splits, axis=1)
            ):
                grads, _ = net.backward_from_trace(trace, grad_slice)
                net.apply_gradients(grads, lr)
    return split_model_accuracy(model, dataset)


def split_model_accuracy(model: SplitModel, dataset: LabeledDataset) -> float:
    probs = model.predict_clean(dataset.features_by_client)
    return float((probs.argmax(axis=1) == dataset.labels).mean())


def make_synthetic_task(
    n_clients: int,
    per_client_dim: int,
    n_classes: int,
    informativeness_weights: Sequence[float],
    seed: int,
    samples_per_class: int = 160,
    embedding_dim: int = 4,
    top_hidden_dim: int = 32,
    signal_scale: float = 1.1,
    noise_scale: float = 1.2,
    weight_sharpness: float = 1.25,
    max_epochs: int = 400,
    target_accuracy: float = 0.90,
    early_stop_accuracy: float = 0.93,
) -> SyntheticTask:
    """Build class-conditional Gaussian blobs and train a split model on them.

    Each client's class-mean separation grows with its informativeness
    weight (raised to ``weight_sharpness`` so weight ratios translate into
    clearly separated attack difficulty), so channels of high-weight
    clients carry more of the decision evidence and corruption patterns
    covering them are more attackable. Training stops at the first
    accuracy check past ``early_stop_accuracy`` to keep decision margins
    moderate instead of grinding them arbitrarily large. Raises
    :class:`~vflbandit.nets.TrainingError` if joint training cannot reach
    ``target_accuracy`` within ``max_epochs``.
    """
    weights = np.asarray(informativeness_weights, dtype=float)
    if weights.shape != (n_clients,):
        raise ValueError("one informativeness weight per client required")
    if np.any(weights < 0) or weights.sum() == 0:
        raise ValueError("informativeness weights must be non-negative and not all zero")
    data_rng = rng_substream(seed, "task-data")
    # Normalize so a uniform weight vector gives every client unit signal.
    sharpened = weights ** weight_sharpness
    scaled = sharpened / np.sqrt((sharpened ** 2).mean())
    class_means = []
    for m in range(n_clients):
        directions = data_rng.standard_normal((n_classes, per_client_dim))
        if n_classes <= per_client_dim:
            # Orthonormal class directions give every client the same
            # class geometry, so equal weights mean equal informativeness.
            directions, _ = np.linalg.qr(directions.T)
            directions = directions.T[:n_classes]
        else:
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        class_means.append(signal_scale * scaled[m] * directions)
    labels = np.repeat(np.arange(n_classes), samples_per_class)
    blocks = []
    for m in range(n_clients):
        noise = data_rng.normal(0.0, noise_scale, size=(len(labels), per_client_dim))
        blocks.append(class_means[m][labels] + noise)
    order = data_rng.permutation(len(labels))
    dataset = LabeledDataset([block[order] for block in blocks], labels[order])

    model_rng = rng_substream(seed, "task-model")
    bottoms = [
        DenseNetwork.initialize([per_client_dim, embedding_dim], model_rng,
                                output_activation="relu")
        for _ in range(n_clients)
    ]
    top = DenseNetwork.initialize(
        [embedding_dim * n_clients, top_hidden_dim, n_classes], model_rng
    )
    model = SplitModel(bottoms, top)
    train_rng = rng_substream(seed, "task-training")
    acc = 0.0
    epochs_run = 0
    while epochs_run < max_epochs:
        acc = train_split_model(model, dataset, 5, lr=0.05, rng=train_rng)
        epochs_run += 5
        if acc >= early_stop_accuracy:
            break
    if acc < target_accuracy:
        raise TrainingError(
            f"split model reached {acc:.3f} accuracy after {epochs_run} epochs "
            f"(required {target_accuracy}; clients={n_clients}, classes={n_classes}, "
            f"weights={weights.tolist()})"
        )
    clean = model.predict_clean(dataset.features_by_client).argmax(axis=1)
    return SyntheticTask(dataset, model, acc, clean)


SPLIT_MODEL_FORMAT = "split-model/1"


def save_split_model(path, model: SplitModel, seed: int | None = None) -> None:
    """Persist a split model with a manifest of its dimensions."""
    payload = {
        "format": SPLIT_MODEL_FORMAT,
        "n_clients": model.n_clients,
        "embedding_dims": model.embedding_dims,
        "n_classes": model.n_classes,
        "seed": seed,
        "bottom_models": [net.to_dict() for net in model.bottom_models],
        "top_model": model.top_model.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_split_model(path) -> SplitModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != SPLIT_MODEL_FORMAT:
        raise ValueError(f"unsupported split-model format: {payload.get('format')!r}")
    bottoms = [DenseNetwork.from_dict(d) for d in payload["bottom_models"]]
    return SplitModel(bottoms, DenseNetwork.from_dict(payload["top_model"]))
