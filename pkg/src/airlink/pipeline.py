"""Training strategies for channel-robust networks and end-to-end evaluation.

Noise injection perturbs a copy of the weights with the noise the channel
would add after power normalisation, evaluates the loss on the noisy copy and
applies the resulting gradient to the clean weights (for additive noise the
two gradients coincide).
"""

from dataclasses import dataclass, replace
import math
import warnings

import numpy as np

from .channel import equalize, snr_to_noise_variance, transmit
from .codec import SpiralParams, decode_network, encode_network, stream_gain
from .data import make_blobs
from .nn import (
    Layer,
    Network,
    NumericError,
    OptState,
    accuracy,
    forward,
    loss_and_grads,
    prune_counts,
    prune_structured,
    sgd_step,
)
from .rng import gaussian, make_rng

__all__ = [
    "TrainConfig",
    "PruneSchedule",
    "InterpolationPair",
    "DESK_SIZES",
    "desk_task",
    "desk_config",
    "lr_at",
    "inject_noise",
    "train_noise_injection",
    "train_plain",
    "prune_finetune",
    "sandwich_snr",
    "train_variable_snr",
    "interpolation_weights",
    "train_interpolation",
    "interpolate",
    "evaluate_over_channel",
]

DESK_SIZES = (2, 32, 32, 3)

# stream keys for make_rng
_SHUFFLE, _NOISE, _SNR, _LOG = 0x5A0F, 0x0153, 0x5412, 0x106


@dataclass
class TrainConfig:
    epochs: int = 60
    lr_schedule: tuple = ((0, 0.01), (30, 0.001))
    momentum: float = 0.9
    batch_size: int = 32
    snr_train_db: float = 5.0
    noise_injection: bool = True
    teacher: Network = None
    temperature: float = 2.0
    plan: object = None  # ExpansionPlan whose factors scale the injected variance
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class PruneSchedule:
    target_param_count: int
    fraction: float = 0.1
    mode: str = "joint"

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError("fraction must lie in (0, 1)")
        if self.mode not in ("joint", "separate"):
            raise ValueError(f"unknown prune mode {self.mode!r}")


@dataclass(frozen=True)
class InterpolationPair:
    w_min: Network
    w_max: Network
    snr_min_db: float
    snr_max_db: float

    def __post_init__(self):
        if self.w_min.arch_id != self.w_max.arch_id:
            raise ValueError("boundary networks differ in architecture")
        if not self.snr_min_db < self.snr_max_db:
            raise ValueError("snr_min_db must be below snr_max_db")


def desk_task(seed=0, n_samples=600, spread=1.0, test_fraction=0.5):
    """Three 2-D Gaussian blobs split into ``(train, test)``."""
    data = make_blobs(n_samples=n_samples, n_classes=3, n_features=2, spread=spread, seed=seed)
    return data.split(1.0 - test_fraction, seed)


def desk_config(epochs=600, **overrides):
    """Two-stage schedule: lr 0.01 for the first half, 0.001 for the second."""
    cfg = TrainConfig(epochs=epochs, lr_schedule=((0, 0.01), (epochs // 2, 0.001)))
    return replace(cfg, **overrides)


def lr_at(schedule, epoch):
    lr = schedule[0][1]
    for start, value in schedule:
        if epoch >= start:
            lr = value
    return lr


def inject_noise(net, snr_db, rng, plan=None, power=1.0, spiral=SpiralParams()):
    """Copy of ``net`` with the channel's effective per-parameter noise added.

    The noise std is ``sqrt(sigma^2 / 2) / g`` with ``g`` the gain the encoder
    would apply; under an expansion plan layer ``i`` gets variance divided by
    its factor ``r_i``.
    """
    sigma2 = snr_to_noise_variance(snr_db)
    if sigma2 == 0.0:
        return net
    gain = stream_gain(net, plan, spiral, power)
    if not gain > 0.0:  # parameter energy overflowed
        raise NumericError("weights diverged during training")
    base = math.sqrt(sigma2 / 2.0) / gain
    factors = plan.factors if plan is not None else (1,) * len(net.layers)
    layers = []
    for layer, r in zip(net.layers, factors):
        std = base / math.sqrt(r)
        layers.append(
            Layer(
                layer.weights + gaussian(rng, layer.weights.shape, std),
                layer.bias + gaussian(rng, layer.bias.shape, std),
                layer.activation,
            )
        )
    return Network(tuple(layers))


def _grads_at(net, xb, yb, cfg):
    teacher = forward(cfg.teacher, xb) if cfg.teacher is not None else None
    return loss_and_grads(net, xb, yb, teacher, cfg.temperature)


def _log_epoch(history, epoch, net, data, cfg, snr_db, rng):
    """Append one log row; ``loss`` is the training objective at the clean weights."""
    if history is None:
        return
    noisy_acc = float("nan")
    if snr_db is not None:
        noisy_acc = accuracy(inject_noise(net, snr_db, rng, cfg.plan), data)
    loss, _ = _grads_at(net, data.features, data.labels, cfg)
    history.append({"epoch": epoch, "loss": float(loss), "clean_acc": accuracy(net, data),
                    "noisy_acc": noisy_acc})


def sandwich_snr(iteration, snr_min, snr_max, rng):
    """min, max, then a uniform draw; repeating with period 3."""
    phase = iteration % 3
    if phase == 0:
        return snr_min
    if phase == 1:
        return snr_max
    return float(rng.uniform(snr_min, snr_max))


def _train(net, data, cfg, snr_for, history=None, snr_log=None):
    shuffle_rng = make_rng(cfg.seed, _SHUFFLE)
    noise_rng = make_rng(cfg.seed, _NOISE)
    snr_rng = make_rng(cfg.seed, _SNR)
    log_rng = make_rng(cfg.seed, _LOG)
    state = OptState(lr_at(cfg.lr_schedule, 0), cfg.momentum)
    iteration = 0
    snr = None
    for epoch in range(cfg.epochs):
        state.learning_rate = lr_at(cfg.lr_schedule, epoch)
        for xb, yb in data.batches(cfg.batch_size, shuffle_rng):
            snr = snr_for(iteration, snr_rng) if cfg.noise_injection else None
            if snr_log is not None:
                snr_log.append(snr)
            target = inject_noise(net, snr, noise_rng, cfg.plan) if snr is not None else net
            _, grads = _grads_at(target, xb, yb, cfg)
            net = sgd_step(net, grads, state)
            iteration += 1
        _log_epoch(history, epoch, net, data, cfg, snr, log_rng)
    return net


def train_noise_injection(net, data, cfg, history=None):
    """SGD where each minibatch loss is taken on a fresh noisy copy of the weights."""
    return _train(net, data, cfg, lambda _it, _rng: cfg.snr_train_db, history)


def train_plain(net, data, cfg, history=None):
    return train_noise_injection(net, data, replace(cfg, noise_injection=False), history)


def train_variable_snr(net, data, snr_min, snr_max, cfg, history=None, snr_log=None):
    """Noise-injection training whose SNR follows the sandwich rule per minibatch."""
    if snr_min > snr_max:
        raise ValueError("snr_min must not exceed snr_max")
    return _train(net, data, cfg, lambda it, rng: sandwich_snr(it, snr_min, snr_max, rng),
                  history, snr_log)


def _hidden_widths_after(net, fraction, target):
    """Simulate pruning on layer widths; return the number of rounds or raise."""
    sizes = list(net.sizes)
    rounds = 0

    def count(s):
        return sum(o * i + o for i, o in zip(s, s[1:]))

    while count(sizes) > target:
        if len(sizes) <= 2:
            raise ValueError("no hidden layer to prune; target unreachable")
        nxt = list(sizes)
        for k in range(1, len(sizes) - 1):
            drop = prune_counts(sizes[k], fraction)
            if drop >= sizes[k]:
                raise ValueError(
                    f"target {target} unreachable: pruning would empty hidden layer {k - 1}"
                )
            nxt[k] = sizes[k] - drop
        sizes = nxt
        rounds += 1
    return rounds


def prune_finetune(net, data, cfg, sched, history=None):
    """Alternate structured pruning and fine-tuning until under the target size.

    ``joint`` fine-tunes with noise injection after every pruning round;
    ``separate`` fine-tunes without noise and runs one noise-injection
    retraining once the target is met.
    """
    rounds = _hidden_widths_after(net, sched.fraction, sched.target_param_count)
    finetune = cfg if sched.mode == "joint" else replace(cfg, noise_injection=False)
    for k in range(rounds):
        net = prune_structured(net, sched.fraction)
        net = train_noise_injection(net, data, replace(finetune, seed=cfg.seed + 7919 * (k + 1)),
                                    history)
    if sched.mode == "separate" and rounds and cfg.noise_injection:
        net = train_noise_injection(net, data, cfg, history)
    return net


def interpolation_weights(snr_db, snr_min, snr_max):
    a1 = abs(snr_max - snr_db) / abs(snr_max - snr_min)
    return a1, 1.0 - a1


def _mix(w_min, w_max, a1, a2):
    return Network(
        tuple(
            Layer(a1 * lo.weights + a2 * hi.weights, a1 * lo.bias + a2 * hi.bias, lo.activation)
            for lo, hi in zip(w_min.layers, w_max.layers)
        )
    )


def train_interpolation(init, data, snr_min, snr_max, cfg, history=None):
    """Train two boundary networks whose convex combinations serve intermediate SNRs.

    Minibatch iterations cycle through: a step on ``w_min`` at ``snr_min``; a
    step on ``w_max`` at ``snr_max``; a step on the interpolated network at a
    uniformly drawn SNR, whose gradient reaches the boundaries scaled by
    ``a1`` and ``a2``.
    """
    w_min, w_max = init, init
    shuffle_rng = make_rng(cfg.seed, _SHUFFLE)
    noise_rng = make_rng(cfg.seed, _NOISE)
    snr_rng = make_rng(cfg.seed, _SNR)
    log_rng = make_rng(cfg.seed, _LOG)
    st_min = OptState(lr_at(cfg.lr_schedule, 0), cfg.momentum)
    st_max = OptState(lr_at(cfg.lr_schedule, 0), cfg.momentum)
    iteration = 0
    for epoch in range(cfg.epochs):
        st_min.learning_rate = st_max.learning_rate = lr_at(cfg.lr_schedule, epoch)
        for xb, yb in data.batches(cfg.batch_size, shuffle_rng):
            phase = iteration % 3
            if phase == 0:
                _, g = _grads_at(inject_noise(w_min, snr_min, noise_rng, cfg.plan), xb, yb, cfg)
                w_min = sgd_step(w_min, g, st_min)
            elif phase == 1:
                _, g = _grads_at(inject_noise(w_max, snr_max, noise_rng, cfg.plan), xb, yb, cfg)
                w_max = sgd_step(w_max, g, st_max)
            else:
                snr = float(snr_rng.uniform(snr_min, snr_max))
                a1, a2 = interpolation_weights(snr, snr_min, snr_max)
                mixed = _mix(w_min, w_max, a1, a2)
                _, g = _grads_at(inject_noise(mixed, snr, noise_rng, cfg.plan), xb, yb, cfg)
                w_min = sgd_step(w_min, g.scaled(a1), st_min)
                w_max = sgd_step(w_max, g.scaled(a2), st_max)
            iteration += 1
        mid = 0.5 * (snr_min + snr_max)
        _log_epoch(history, epoch, _mix(w_min, w_max, 0.5, 0.5), data, cfg, mid, log_rng)
    return InterpolationPair(w_min, w_max, snr_min, snr_max)


def interpolate(pair, snr_db):
    """Network for ``snr_db``; out-of-range SNRs are clamped with a warning."""
    if pair.w_min.arch_id != pair.w_max.arch_id:
        raise ValueError("boundary networks differ in architecture")
    if not pair.snr_min_db <= snr_db <= pair.snr_max_db:
        warnings.warn(
            f"SNR {snr_db} dB outside [{pair.snr_min_db}, {pair.snr_max_db}]; clamping",
            stacklevel=2,
        )
        snr_db = min(max(snr_db, pair.snr_min_db), pair.snr_max_db)
    a1, a2 = interpolation_weights(snr_db, pair.snr_min_db, pair.snr_max_db)
    if a2 == 0.0:  # endpoints are returned as-is so they match bitwise
        return pair.w_min.copy()
    if a1 == 0.0:
        return pair.w_max.copy()
    return _mix(pair.w_min, pair.w_max, a1, a2)


def evaluate_over_channel(net, data, spec, plan=None, spiral=SpiralParams(), trials=50, seed=0):
    """Mean and (population) std of accuracy after encode -> channel -> decode."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stream = encode_network(net, plan, spiral)
    hits = np.empty(trials)  # integer counts keep the reduction exact
    for t in range(trials):
        rng = make_rng(seed, spec.seed, t)
        received, fades = transmit(stream, spec, rng)
        eq = equalize(received, fades)
        hits[t] = round(accuracy(decode_network(eq.dims, stream), data) * len(data))
    return float(hits.sum() / (trials * len(data))), float(hits.std() / len(data))
