"""Idealised separation baseline: prune, quantise, send at channel capacity.

No entropy coding is applied, which makes the payload estimate conservative.
Channel coding is assumed to achieve capacity exactly, so the only way a
transmission fails is an outage on a fading channel at a fixed rate.
"""

from dataclasses import dataclass
import math

import numpy as np

from .channel import snr_to_noise_variance
from .nn import Layer, Network, accuracy, prune_structured
from .rng import complex_gaussian, make_rng

__all__ = [
    "DigitalConfig",
    "QuantizedModel",
    "HEADER_BITS",
    "LOSSLESS_BITS",
    "bit_budget",
    "quantize_uniform",
    "dequantize",
    "payload_bits",
    "outage_probability",
    "default_rate",
    "prune_grid",
    "best_under_budget",
    "evaluate_separation",
]

HEADER_BITS = 64  # per layer: f32 min + f32 max
LOSSLESS_BITS = 32  # the model as stored (f32); sent uncompressed whenever it fits
DEFAULT_PRUNE_FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_BITS = (1, 2, 3, 4, 5, 6, 8, 10, 12, 16)


@dataclass(frozen=True)
class DigitalConfig:
    bits_per_weight: int = 8
    rate: float = None  # bits per complex symbol; None -> default_rate()
    scenario: str = "awgn"
    fades: int = 2000
    sigma_h: float = 1.0

    def __post_init__(self):
        if self.bits_per_weight < 1:
            raise ValueError("bits_per_weight must be >= 1")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.scenario not in ("awgn", "fading_outage", "fading_csit"):
            raise ValueError(f"unknown scenario {self.scenario!r}")


@dataclass(frozen=True)
class QuantizedModel:
    ranges: tuple  # per layer (lo, hi)
    bits: int
    codes: tuple  # per layer integer array, weights row-major then bias
    shapes: tuple  # per layer (out, in, activation)

    @property
    def payload_bits(self):
        return sum(c.size for c in self.codes) * self.bits + HEADER_BITS * len(self.codes)


def bit_budget(b_real_dims, snr_db):
    """Bits deliverable in ``b_real_dims / 2`` complex uses at Shannon capacity."""
    if snr_db == -math.inf:
        return 0
    snr_lin = 10.0 ** (snr_db / 10.0)
    return int(math.floor((b_real_dims / 2.0) * math.log2(1.0 + snr_lin) + 1e-9))


def _bits_at_capacity(b_real_dims, capacity):
    return int(math.floor((b_real_dims / 2.0) * capacity + 1e-9))


def quantize_uniform(net, bits):
    """Uniform ``2**bits``-level quantiser over each layer's ``[min, max]``."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    levels = (1 << bits) - 1
    ranges, codes, shapes = [], [], []
    for layer in net.layers:
        values = layer.flat()
        lo, hi = float(values.min()), float(values.max())
        if hi > lo:
            code = np.rint((values - lo) / (hi - lo) * levels).astype(np.int64)
        else:
            code = np.zeros(values.size, dtype=np.int64)
        ranges.append((lo, hi))
        codes.append(code)
        shapes.append((layer.n_out, layer.n_in, layer.activation))
    return QuantizedModel(tuple(ranges), bits, tuple(codes), tuple(shapes))


def dequantize(qm):
    levels = (1 << qm.bits) - 1
    layers = []
    for (lo, hi), code, (n_out, n_in, act) in zip(qm.ranges, qm.codes, qm.shapes):
        values = lo + code * ((hi - lo) / levels) if hi > lo else np.full(code.size, lo)
        values = np.clip(values, lo, hi)
        split = n_out * n_in
        layers.append(Layer(values[:split].reshape(n_out, n_in), values[split:], act))
    return Network(tuple(layers))


def payload_bits(net, bits):
    return net.param_count * bits + HEADER_BITS * len(net.layers)


def outage_probability(rate, snr_avg_db, sigma_h=1.0):
    """``P(log2(1 + |h|^2 / sigma^2) < rate)`` for Rayleigh ``h``."""
    sigma2 = snr_to_noise_variance(snr_avg_db)
    return 1.0 - math.exp(-sigma2 * (2.0**rate - 1.0) / sigma_h**2)


def default_rate(net, b_real_dims, bits=8):
    """Rate at which the ``bits``-per-weight payload exactly fills the bandwidth."""
    return payload_bits(net, bits) / (b_real_dims / 2.0)


def prune_grid(net, fractions=DEFAULT_PRUNE_FRACTIONS):
    """Candidate networks obtained by one-shot structured pruning of ``net``."""
    out = []
    for f in fractions:
        try:
            out.append(prune_structured(net, f))
        except ValueError:
            continue
    return out


def _score_table(candidates, data, bit_options, validation=None):
    """Rows ``(payload, selection_acc, reported_acc)`` for every (candidate, q), by payload.

    ``selection_acc`` is measured on ``validation`` (``data`` if omitted);
    ``reported_acc`` on ``data``.
    """
    table = []
    for cand in candidates:
        for q in bit_options:
            model = dequantize(quantize_uniform(cand, q))
            acc = accuracy(model, data)
            table.append((payload_bits(cand, q), acc if validation is None
                          else accuracy(model, validation), acc))
    table.sort()
    return table


def best_under_budget(table, budget):
    """Reported accuracy of the fitting entry with the best selection accuracy.

    Ties go to the larger payload (less compression).  0 when nothing fits.
    """
    best = None
    for payload, select, acc in table:
        if payload > budget:
            break
        if best is None or select >= best[0]:
            best = (select, acc)
    return 0.0 if best is None else best[1]


def evaluate_separation(net, data, b_real_dims, snr_db, cfg=DigitalConfig(), candidates=None,
                        bit_options=DEFAULT_BITS, seed=0, validation=None):
    """Effective accuracy on ``data`` of the best (pruned, quantised) model the channel can carry.

    If the uncompressed f32 model fits it is sent as is.  Otherwise "best" is
    judged on ``validation`` (the sender's own data), falling back to ``data``
    when no validation set is given.

    ``awgn``: payload within the capacity bit budget.
    ``fading_outage``: fixed rate ``cfg.rate``; accuracy scaled by ``1 - p_out``.
    ``fading_csit``: rate equals each fade's instantaneous capacity; averaged.
    """
    candidates = prune_grid(net) if candidates is None else candidates
    table = _score_table(candidates, data, bit_options, validation)
    lossless = payload_bits(net, LOSSLESS_BITS)
    clean = accuracy(net, data)

    def deliverable(budget):
        return clean if budget >= lossless else best_under_budget(table, budget)

    if cfg.scenario == "awgn":
        return deliverable(bit_budget(b_real_dims, snr_db))
    if cfg.scenario == "fading_outage":
        rate = cfg.rate
        if rate is None:
            rate = default_rate(net, b_real_dims, cfg.bits_per_weight)
        p_out = outage_probability(rate, snr_db, cfg.sigma_h)
        return (1.0 - p_out) * deliverable(_bits_at_capacity(b_real_dims, rate))
    sigma2 = snr_to_noise_variance(snr_db)
    h = complex_gaussian(make_rng(seed, 0xC517), cfg.fades, variance=cfg.sigma_h**2)
    gain = np.abs(h) ** 2
    capacities = np.log2(1.0 + gain / sigma2) if sigma2 > 0 else np.full(cfg.fades, np.inf)
    accs = [deliverable(_bits_at_capacity(b_real_dims, c) if math.isfinite(c) else math.inf)
            for c in capacities]
    return float(np.mean(accs))
