"""Small dense feed-forward networks with exact first-order gradients.

Everything here is plain numpy in float64.  A :class:`Network` is treated as
an immutable value: training, pruning and decoding all return new networks.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .rng import make_rng

__all__ = [
    "Layer",
    "Network",
    "Gradients",
    "OptState",
    "ShapeError",
    "NumericError",
    "init_network",
    "parse_arch",
    "forward",
    "softmax",
    "cross_entropy",
    "kd_loss",
    "per_sample_loss",
    "loss_and_grads",
    "sgd_step",
    "prune_structured",
    "prune_counts",
    "accuracy",
]

ACTIVATIONS = ("identity", "relu")


class ShapeError(ValueError):
    pass


class NumericError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    @property
    def size(self):
        return self.weights.size + self.bias.size

    def flat(self):
        """Weights row-major followed by the bias."""
        return np.concatenate([self.weights.ravel(), self.bias])

    def energy(self):
        return float(self.weights.ravel() @ self.weights.ravel() + self.bias @ self.bias)


@dataclass(frozen=True)
class Network:
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ShapeError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.n_in != prev.n_out:
                raise ShapeError(f"layer chain broken: {prev.n_out} -> {nxt.n_in}")
        if self.layers[-1].activation != "identity":
            raise ShapeError("the final layer must emit logits (identity activation)")

    @property
    def sizes(self):
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    @property
    def arch_id(self):
        dims = "-".join(str(s) for s in self.sizes)
        acts = "-".join(layer.activation for layer in self.layers)
        return f"mlp:{dims}:{acts}"

    @property
    def layer_sizes(self):
        return [layer.size for layer in self.layers]

    @property
    def param_count(self):
        return sum(self.layer_sizes)

    def flat(self):
        return np.concatenate([layer.flat() for layer in self.layers])

    def with_flat(self, values):
        """Rebuild a network of the same architecture from a flat vector."""
        return from_flat(self.arch_id, values)

    def map_layers(self, fn):
        return Network(tuple(fn(i, layer) for i, layer in enumerate(self.layers)))

    def copy(self):
        return self.map_layers(
            lambda _, layer: Layer(layer.weights.copy(), layer.bias.copy(), layer.activation)
        )


def parse_arch(arch_id):
    """Return ``(sizes, activations)`` for an architecture descriptor."""
    try:
        kind, dims, acts = arch_id.split(":")
        sizes = [int(s) for s in dims.split("-")]
        activations = acts.split("-")
    except (AttributeError, ValueError):
        raise ValueError(f"unknown arch_id {arch_id!r}") from None
    if (
        kind != "mlp"
        or len(sizes) != len(activations) + 1
        or any(s <= 0 for s in sizes)
        or any(a not in ACTIVATIONS for a in activations)
        or activations[-1] != "identity"
    ):
        raise ValueError(f"unknown arch_id {arch_id!r}")
    return sizes, activations


def from_flat(arch_id, values):
    sizes, activations = parse_arch(arch_id)
    values = np.asarray(values, dtype=np.float64)
    expected = sum(o * i + o for i, o in zip(sizes, sizes[1:]))
    if values.size != expected:
        raise ShapeError(f"{arch_id} has {expected} parameters, got {values.size}")
    layers, pos = [], 0
    for n_in, n_out, act in zip(sizes, sizes[1:], activations):
        w = values[pos : pos + n_in * n_out].reshape(n_out, n_in).copy()
        pos += n_in * n_out
        b = values[pos : pos + n_out].copy()
        pos += n_out
        layers.append(Layer(w, b, act))
    return Network(tuple(layers))


def init_network(sizes, seed, activations=None):
    """Glorot-uniform weights and zero biases, ReLU hidden layers."""
    if activations is None:
        activations = ["relu"] * (len(sizes) - 2) + ["identity"]
    rng = make_rng(seed, 0x1417)
    layers = []
    for n_in, n_out, act in zip(sizes, sizes[1:], activations):
        limit = math.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_out, n_in))
        layers.append(Layer(w, np.zeros(n_out), act))
    return Network(tuple(layers))


@dataclass
class Gradients:
    weights: list
    biases: list

    def flat(self):
        parts = []
        for gw, gb in zip(self.weights, self.biases):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    def layer_flat(self, i):
        return np.concatenate([self.weights[i].ravel(), self.biases[i]])

    def scaled(self, factor):
        return Gradients([factor * g for g in self.weights], [factor * g for g in self.biases])


@dataclass
class OptState:
    learning_rate: float
    momentum: float = 0.9
    velocity: list = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def _check_batch(net, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.layers[0].n_in:
        raise ShapeError(
            f"batch of shape {batch.shape} does not fit input size {net.layers[0].n_in}"
        )
    return batch


def _forward_cache(net, batch):
    acts = [batch]
    a = batch
    for layer in net.layers:
        z = a @ layer.weights.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(a)
    return acts


def forward(net, batch):
    """Logits for every row of ``batch``."""
    return _forward_cache(net, _check_batch(net, batch))[-1]


def softmax(logits, temperature=1.0):
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def per_sample_loss(logits, labels, teacher_logits=None, temperature=2.0):
    """Loss of every sample; distillation term added when a teacher is given.

    The distillation term is ``-t^2 * sum(softmax(teacher / t) * log p)`` where
    ``p`` is the student's plain softmax (no temperature on the student side).
    """
    logp = _log_softmax(logits)
    loss = -logp[np.arange(len(labels)), labels]
    if teacher_logits is not None:
        soft = softmax(teacher_logits, temperature)
        loss = loss - temperature**2 * (soft * logp).sum(axis=1)
    return loss


def cross_entropy(logits, labels):
    return float(per_sample_loss(logits, labels).mean())


def kd_loss(logits, labels, teacher_logits, temperature=2.0):
    return float(per_sample_loss(logits, labels, teacher_logits, temperature).mean())


def _validate(labels, n_classes, n_rows):
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise ShapeError(f"expected {n_rows} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label outside [0, N)")
    return labels.astype(np.intp)


def loss_and_grads(net, batch, labels, teacher_logits=None, temperature=2.0, reduction="mean"):
    """Loss and exact gradients of cross-entropy (plus KD when a teacher is given).

    ``reduction`` is ``"mean"`` (training) or ``"sum"`` (sensitivity analysis).
    """
    batch = _check_batch(net, batch)
    n_classes = net.layers[-1].n_out
    labels = _validate(labels, n_classes, batch.shape[0])
    if not np.all(np.isfinite(batch)):
        raise NumericError("non-finite value in batch")
    if teacher_logits is not None:
        teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
        if teacher_logits.shape != (batch.shape[0], n_classes):
            raise ShapeError("teacher logits do not match the batch")
        if not np.all(np.isfinite(teacher_logits)):
            raise NumericError("non-finite teacher logits")

    acts = _forward_cache(net, batch)
    logits = acts[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    losses = per_sample_loss(logits, labels, teacher_logits, temperature)
    scale = 1.0 / batch.shape[0] if reduction == "mean" else 1.0

    p = softmax(logits)
    delta = p.copy()
    delta[np.arange(len(labels)), labels] -= 1.0
    if teacher_logits is not None:
        delta += temperature**2 * (p - softmax(teacher_logits, temperature))
    delta *= scale

    gw = [None] * len(net.layers)
    gb = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        gw[k] = delta.T @ acts[k]
        gb[k] = delta.sum(axis=0)
        if k:
            delta = delta @ layer.weights
            if net.layers[k - 1].activation == "relu":
                delta = delta * (acts[k] > 0)
    return float(losses.sum() * scale), Gradients(gw, gb)


def sgd_step(net, grads, state):
    """Classic momentum: ``v <- m*v + g``, ``w <- w - lr*v``."""
    if len(grads.weights) != len(net.layers):
        raise ShapeError("gradient does not match the network")
    if state.velocity is None:
        state.velocity = [
            (np.zeros_like(layer.weights), np.zeros_like(layer.bias)) for layer in net.layers
        ]
    layers = []
    for k, layer in enumerate(net.layers):
        w_shape, b_shape = grads.weights[k].shape, grads.biases[k].shape
        if w_shape != layer.weights.shape or b_shape != layer.bias.shape:
            raise ShapeError(f"gradient shape mismatch in layer {k}")
        vw, vb = state.velocity[k]
        vw = state.momentum * vw + grads.weights[k]
        vb = state.momentum * vb + grads.biases[k]
        state.velocity[k] = (vw, vb)
        layers.append(
            Layer(
                layer.weights - state.learning_rate * vw,
                layer.bias - state.learning_rate * vb,
                layer.activation,
            )
        )
    return Network(tuple(layers))


def prune_counts(n_out, fraction):
    """Neurons removed from a layer of width ``n_out``."""
    return math.ceil(fraction * n_out - 1e-12) if fraction > 0 else 0


def prune_structured(net, fraction):
    """Drop the lowest-L1 neurons from every hidden layer.

    A neuron's score is the L1 norm of its incoming weight row plus its bias.
    Ties go to the lowest index.  The output layer is never pruned.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    layers = list(net.layers)
    for k in range(len(layers) - 1):
        layer = layers[k]
        n_drop = prune_counts(layer.n_out, fraction)
        if n_drop == 0:
            continue
        if n_drop >= layer.n_out:
            raise ValueError(f"pruning {fraction} would empty layer {k}")
        score = np.abs(layer.weights).sum(axis=1) + np.abs(layer.bias)
        order = np.argsort(score, kind="stable")
        keep = np.sort(order[n_drop:])
        layers[k] = Layer(layer.weights[keep], layer.bias[keep], layer.activation)
        nxt = layers[k + 1]
        layers[k + 1] = Layer(nxt.weights[:, keep], nxt.bias, nxt.activation)
    return Network(tuple(layers))


def accuracy(net, data):
    """Top-1 accuracy; argmax ties resolve to the lowest class index."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    logits = forward(net, data.features)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))
