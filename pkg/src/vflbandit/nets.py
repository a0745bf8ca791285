"""Minimal dense feed-forward network engine (forward, backprop, SGD, dropout).

Everything is plain numpy with float64 parameters. Networks are small
stacks of affine layers with ReLU or identity activations; inference-time
dropout zeroes hidden units independently and rescales survivors by
1/(1-rate). Parameters serialize to a documented JSON layout so trained
models can be pinned by experiments.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")

SERIALIZATION_FORMAT = "dense-network/1"


class TrainingError(RuntimeError):
    """Raised when a training run fails to reach its required accuracy."""


@dataclass
class Layer:
    """One affine layer: ``output = activation(input @ weights + bias)``."""

    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2:
            raise ValueError("layer weights must be a 2-D matrix")
        if self.bias.shape != (self.weights.shape[1],):
            raise ValueError("bias length must match the weight matrix width")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("layer parameters must be finite")


class DenseNetwork:
    """A chain of affine layers with matching adjacent dimensions."""

    def __init__(self, layers: Sequence[Layer]) -> None:
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for left, right in zip(layers, layers[1:]):
            if left.weights.shape[1] != right.weights.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def initialize(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
    ) -> "DenseNetwork":
        """Uniform +-1/sqrt(fan_in) weights; hidden ReLU, identity output."""
        if len(dims) < 2:
            raise ValueError("dims must list input and output sizes")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            scale = 1.0 / np.sqrt(fan_in)
            weights = rng.uniform(-scale, scale, size=(fan_in, fan_out))
            bias = rng.uniform(-scale, scale, size=fan_out)
            act = output_activation if i == len(dims) - 2 else hidden_activation
            layers.append(Layer(weights, bias, act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def forward(
        self,
        x: np.ndarray,
        dropout_rate: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Run the affine+activation chain on a sample (d,) or batch (n, d).

        With ``dropout_rate > 0`` each hidden activation is zeroed
        independently with that probability and survivors are scaled by
        1/(1-rate); rate 0 never consumes randomness.
        """
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if dropout_rate > 0.0 and rng is None:
            raise ValueError("dropout needs an rng")
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x.reshape(1, -1) if single else x
        if a.shape[1] != self.input_dim:
            raise ValueError(f"input width {a.shape[1]} != expected {self.input_dim}")
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            z = a @ layer.weights + layer.bias
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
            if dropout_rate > 0.0 and i < last:
                mask = rng.random(a.shape) >= dropout_rate
                a = a * mask / (1.0 - dropout_rate)
        return a[0] if single else a

    def forward_trace(self, x: np.ndarray) -> list[np.ndarray]:
        """Layer inputs [a0, a1, ..., aL] for backprop; x must be a batch."""
        activations = [np.asarray(x, dtype=float)]
        for layer in self.layers:
            z = activations[-1] @ layer.weights + layer.bias
            activations.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
        return activations

    def backward_from_trace(
        self, activations: list[np.ndarray], grad_output: np.ndarray
    ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Backpropagate ``grad_output`` through the chain.

        Returns per-layer (weight grad, bias grad) plus the gradient with
        respect to the network input.
        """
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)  # type: ignore
        delta = np.asarray(grad_output, dtype=float)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if layer.activation == "relu":
                delta = delta * (activations[i + 1] > 0.0)
            grads[i] = (activations[i].T @ delta, delta.sum(axis=0))
            delta = delta @ layer.weights.T
        return grads, delta

    def apply_gradients(self, grads, lr: float) -> None:
        for layer, (gw, gb) in zip(self.layers, grads):
            layer.weights -= lr * gw
            layer.bias -= lr * gb

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [Layer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def to_dict(self) -> dict:
        return {
            "format": SERIALIZATION_FORMAT,
            "layers": [
                {
                    "activation": layer.activation,
                    "shape": list(layer.weights.shape),
                    "weights": layer.weights.ravel().tolist(),  # row-major
                    "bias": layer.bias.tolist(),
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNetwork":
        if data.get("format") != SERIALIZATION_FORMAT:
            raise ValueError(f"unsupported network format: {data.get('format')!r}")
        layers = []
        for spec in data["layers"]:
            fan_in, fan_out = spec["shape"]
            weights = np.array(spec["weights"], dtype=float).reshape(fan_in, fan_out)
            layers.append(Layer(weights, np.array(spec["bias"], dtype=float), spec["activation"]))
        return cls(layers)


def save_network(path, net: DenseNetwork) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(net.to_dict(), fh)


def load_network(path) -> DenseNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return DenseNetwork.from_dict(json.load(fh))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Log-sum-exp stabilized softmax over the last axis."""
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[np.ndarray, float]:
    """Probabilities and negative log-likelihood of ``label`` for one sample."""
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1:
        raise ValueError("softmax_cross_entropy expects a single logit vector")
    shifted = logits - logits.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    return np.exp(log_probs), float(-log_probs[label])


def margin_loss(logits: np.ndarray, label: int) -> float:
    """Best rival logit minus the label's logit (negative once correct by a margin)."""
    logits = np.asarray(logits, dtype=float)
    rivals = np.delete(logits, label)
    return float(rivals.max() - logits[label])


@dataclass
class LabeledDataset:
    """Feature vectors partitioned by client plus integer class labels."""

    features_by_client: list[np.ndarray]
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.features_by_client = [np.asarray(f, dtype=float) for f in self.features_by_client]
        self.labels = np.asarray(self.labels, dtype=int)
        if not self.features_by_client:
            raise ValueError("dataset needs at least one client block")
        n = self.features_by_client[0].shape[0]
        for block in self.features_by_client:
            if block.ndim != 2 or block.shape[0] != n:
                raise ValueError("client feature blocks must share the sample count")
        if self.labels.shape != (n,):
            raise ValueError("labels must be one integer per sample")
        if self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        present = np.unique(self.labels)
        if not np.array_equal(present, np.arange(self.labels.max() + 1)):
            raise ValueError("every class index up to the max label must appear")

    @property
    def n_samples(self) -> int:
        return self.features_by_client[0].shape[0]

    @property
    def n_clients(self) -> int:
        return len(self.features_by_client)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def client_dims(self) -> list[int]:
        return [block.shape[1] for block in self.features_by_client]

    @property
    def features(self) -> np.ndarray:
        """All client blocks concatenated in client order."""
        return np.concatenate(self.features_by_client, axis=1)

    def client_row(self, index: int) -> list[np.ndarray]:
        return [block[index] for block in self.features_by_client]


def batch_cross_entropy(net: DenseNetwork, x: np.ndarray, y: np.ndarray) -> float:
    logits = net.forward(x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(y)), y].mean())


def loss_and_gradients(net: DenseNetwork, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch plus analytic parameter gradients."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    activations = net.forward_trace(x)
    logits = activations[-1]
    probs = softmax(logits)
    n = len(y)
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    grad_logits = probs.copy()
    grad_logits[np.arange(n), y] -= 1.0
    grad_logits /= n
    grads, _ = net.backward_from_trace(activations, grad_logits)
    return loss, grads


def backward_sgd_step(net: DenseNetwork, batch, lr: float) -> tuple[DenseNetwork, float]:
    """One SGD step on a (features, labels) batch; returns (net, batch loss).

    The network is updated in place; the returned loss is the pre-update
    batch loss.
    """
    x, y = batch
    loss, grads = loss_and_gradients(net, x, y)
    net.apply_gradients(grads, lr)
    return net, loss


def accuracy(net: DenseNetwork, x: np.ndarray, y: np.ndarray) -> float:
    predictions = net.forward(x).argmax(axis=1)
    return float((predictions == np.asarray(y)).mean())


def train(
    net: DenseNetwork,
    dataset: LabeledDataset,
    epochs: int,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = 32,
) -> tuple[DenseNetwork, float]:
    """Mini-batch SGD on the concatenated features; returns final train accuracy."""
    x = dataset.features
    y = dataset.labels
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            backward_sgd_step(net, (x[idx], y[idx]), lr)
    return net, accuracy(net, x, y)
