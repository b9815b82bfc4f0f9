"""Per-layer sensitivity and unequal bandwidth allocation.

Two sensitivity metrics are offered for a dense layer ``i``:

* ``loss_based``: average over noise draws of ``sum_j (l(w, I_j) - l(w~, I_j))**2``
  where only layer ``i`` of ``w~`` is perturbed.
* ``hessian``: the dominant eigenvalue of the Hessian of the summed training
  loss restricted to layer ``i``, found by power iteration with
  Hessian-vector products taken as central differences of the exact gradient.

:func:`allocate_expansion` turns sensitivities into per-layer expansion
factors by greedily expanding the layer with the largest
energy-normalised sensitivity ``s_i / (r_i * ||w_i||^2)``.
"""

from dataclasses import dataclass
import math

import numpy as np

from .channel import snr_to_noise_variance
from .codec import ExpansionPlan, stream_gain
from .nn import Layer, Network, loss_and_grads, per_sample_loss, forward
from .rng import gaussian, make_rng

__all__ = [
    "LayerSensitivity",
    "EigenResult",
    "channel_noise_std",
    "perturbation_sensitivity",
    "loss_sensitivity",
    "power_iteration",
    "layer_gradient_fn",
    "hessian_top_eigenvalue",
    "layer_sensitivities",
    "allocate_expansion",
    "normalized_sensitivity",
]

EPSILON = 1e-6
MAX_ITER = 200
FD_STEP = 1e-4


@dataclass(frozen=True)
class LayerSensitivity:
    values: tuple
    metric: str

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.metric not in ("loss_based", "hessian"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if any(not math.isfinite(v) or v < 0 for v in self.values):
            raise ValueError("sensitivities must be finite and non-negative")


@dataclass(frozen=True)
class EigenResult:
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def channel_noise_std(net, snr_db, plan=None, power=1.0):
    """Per-parameter noise std that the channel induces after de-normalisation."""
    sigma2 = snr_to_noise_variance(snr_db)
    return math.sqrt(sigma2 / 2.0) / stream_gain(net, plan, power=power)


def _replace_layer(net, i, values):
    layer = net.layers[i]
    w = values[: layer.weights.size].reshape(layer.weights.shape)
    b = values[layer.weights.size :]
    layers = list(net.layers)
    layers[i] = Layer(w, b, layer.activation)
    return Network(tuple(layers))


def perturbation_sensitivity(sample_losses, layer_values, noise_std, trials, rng):
    """Generic loss-perturbation score.

    ``sample_losses(values)`` returns per-sample losses with the layer set to
    ``values``; each trial adds ``N(0, noise_std**2)`` to ``layer_values``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = sample_losses(layer_values)
    total = 0.0
    for _ in range(trials):
        noisy = layer_values + gaussian(rng, layer_values.shape, std=noise_std)
        total += float(np.sum((base - sample_losses(noisy)) ** 2))
    return total / trials


def loss_sensitivity(net, data, noise_std, layer, trials=8, seed=0):
    """Squared per-sample loss change when only ``layer`` is perturbed."""
    if noise_std == 0:
        return 0.0

    def sample_losses(values):
        perturbed = _replace_layer(net, layer, values)
        return per_sample_loss(forward(perturbed, data.features), data.labels)

    rng = make_rng(seed, 0x5E45, layer)
    return perturbation_sensitivity(sample_losses, net.layers[layer].flat(), noise_std, trials, rng)


def power_iteration(grad_fn, w0, epsilon=EPSILON, max_iter=MAX_ITER, rng=None):
    """Dominant eigenvalue of the Hessian of the loss whose gradient is ``grad_fn``.

    The Hessian-vector product is the central difference of ``grad_fn`` along
    ``v``.  Iteration stops when ``v`` moves less than ``epsilon`` in every
    entry (up to a sign flip) or after ``max_iter`` products.
    """
    w0 = np.asarray(w0, dtype=np.float64)
    rng = rng if rng is not None else make_rng(0)

    def hvp(v):
        h = FD_STEP / np.linalg.norm(v)
        return (grad_fn(w0 + h * v) - grad_fn(w0 - h * v)) / (2.0 * h)

    v = gaussian(rng, w0.shape)
    v /= np.linalg.norm(v)
    hv = hvp(v)
    lam = float(v @ hv)
    for it in range(1, max_iter + 1):
        norm = np.linalg.norm(hv)
        if norm == 0.0:
            return EigenResult(0.0, v, it, True)
        v_prev = v
        v = hv / norm
        hv = hvp(v)
        lam = float(v @ hv) / float(v @ v)
        moved = min(np.max(np.abs(v - v_prev)), np.max(np.abs(v + v_prev)))
        if moved < epsilon:
            return EigenResult(lam, v, it, True)
    return EigenResult(lam, v, max_iter, False)


def layer_gradient_fn(net, data, layer):
    """Gradient of the summed loss w.r.t. one layer's flat parameters."""

    def grad(values):
        _, g = loss_and_grads(_replace_layer(net, layer, values), data.features, data.labels,
                              reduction="sum")
        return g.layer_flat(layer)

    return grad


def hessian_top_eigenvalue(net, data, layer, epsilon=EPSILON, max_iter=MAX_ITER, seed=0):
    rng = make_rng(seed, 0xE16E, layer)
    return power_iteration(layer_gradient_fn(net, data, layer), net.layers[layer].flat(),
                           epsilon, max_iter, rng)


def layer_sensitivities(net, data, metric="hessian", noise_std=None, snr_db=5.0, trials=8,
                        seed=0, epsilon=EPSILON, max_iter=MAX_ITER):
    """Sensitivity of every layer under ``metric``.

    Hessian eigenvalues are clipped at 0 (a negative curvature direction does
    not call for more protection).
    """
    values = []
    for i in range(len(net.layers)):
        if metric == "hessian":
            values.append(max(0.0, hessian_top_eigenvalue(net, data, i, epsilon, max_iter,
                                                          seed).value))
        elif metric == "loss_based":
            std = channel_noise_std(net, snr_db) if noise_std is None else noise_std
            values.append(loss_sensitivity(net, data, std, i, trials, seed))
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return LayerSensitivity(values, metric)


def normalized_sensitivity(sensitivities, energies, factors=None):
    s = np.asarray(sensitivities, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    r = np.ones_like(s) if factors is None else np.asarray(factors, dtype=np.float64)
    return s / (r * e)


def allocate_expansion(layer_sizes, sensitivities, energies, budget, mode="repeat"):
    """Greedy unequal expansion under a hard bandwidth budget.

    Starting from ``r_i = 1``, the layer with the largest ``s_i / (r_i E_i)``
    is expanded (``+1`` for repetition, ``x2`` for SK) as long as the result
    still fits in ``budget``; the loop ends at the first expansion that would
    not fit.  Ties go to the lowest layer index.
    """
    sizes = [int(d) for d in layer_sizes]
    if not (len(sizes) == len(sensitivities) == len(energies)):
        raise ValueError("layer_sizes, sensitivities and energies must align")
    if any(e <= 0 for e in energies):
        raise ValueError("layer energies must be positive")
    if mode not in ("repeat", "sk"):
        raise ValueError(f"unknown mode {mode!r}")
    if sum(sizes) > budget:
        raise ValueError(
            f"budget {budget} is below the {sum(sizes)} parameters; prune the network first"
        )
    r = [1] * len(sizes)
    used = sum(sizes)
    while True:
        score = normalized_sensitivity(sensitivities, energies, r)
        i = int(np.argmax(score))
        extra = sizes[i] if mode == "repeat" else r[i] * sizes[i]
        if used + extra > budget:
            break
        r[i] = r[i] + 1 if mode == "repeat" else 2 * r[i]
        used += extra
    return ExpansionPlan(tuple(r), mode)
