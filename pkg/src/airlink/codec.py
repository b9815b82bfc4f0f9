"""Analog parameter codecs: direct mapping, repetition and Archimedes-spiral
(Shannon-Kotelnikov) expansion, plus whole-network encode/decode.

Spiral mapping of a scalar ``w``::

    w >= 0:  (D/pi) w cos(g w),              (D/pi) w sin(g w)
    w <  0: -(D/pi) w cos(-g w + pi),       -(D/pi) w sin(-g w + pi)

The negative branch is the point reflection of the positive one, so a single
closed form is ``sign(w) * (D/pi) |w| (cos(g|w|), sin(g|w|))``.  The two arms
interleave and are separated by roughly ``D / g`` in the radial direction.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import kernels
from .channel import normalize_power
from .nn import from_flat, parse_arch

__all__ = [
    "SpiralParams",
    "ExpansionPlan",
    "LayerLayout",
    "SymbolStream",
    "sk_encode",
    "sk_decode",
    "sk_recursive_encode",
    "sk_recursive_decode",
    "repeat_encode",
    "repeat_decode",
    "encode_network",
    "decode_network",
    "stream_gain",
    "spiral_gap",
    "sign_threshold",
    "DECODER_GRID",
    "DECODER_TOL",
    "W_MAX_MARGIN",
]

DECODER_GRID = 4096
DECODER_TOL = 1e-6
W_MAX_MARGIN = 1.05


@dataclass(frozen=True)
class SpiralParams:
    delta: float = 1.0
    gamma: float = 2.0 * math.pi

    def __post_init__(self):
        if self.delta <= 0 or self.gamma <= 0:
            raise ValueError("delta and gamma must be positive")


@dataclass(frozen=True)
class ExpansionPlan:
    factors: tuple
    mode: str = "repeat"

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(int(r) for r in self.factors))
        if self.mode not in ("repeat", "sk"):
            raise ValueError(f"unknown expansion mode {self.mode!r}")
        if any(r < 1 for r in self.factors):
            raise ValueError("expansion factors must be >= 1")
        if self.mode == "sk" and any(r & (r - 1) for r in self.factors):
            raise ValueError("SK factors must be powers of two")

    @classmethod
    def uniform(cls, n_layers, factor=1, mode="repeat"):
        return cls((factor,) * n_layers, mode)

    def bandwidth(self, layer_sizes):
        return sum(r * d for r, d in zip(self.factors, layer_sizes))


@dataclass(frozen=True)
class LayerLayout:
    offset: int
    raw_count: int
    factor: int
    w_max: float = 0.0
    scales: tuple = ()  # per recursive SK stage beyond the first


@dataclass(frozen=True)
class SymbolStream:
    dims: np.ndarray
    layout: tuple
    gain: float
    plan: ExpansionPlan
    spiral: SpiralParams
    arch_id: str
    power: float = 1.0

    def __len__(self):
        return self.dims.size


def _theta(w, p):
    w = np.asarray(w, dtype=np.float64)
    aw = np.abs(w)
    scale = p.delta / math.pi
    return scale * w * np.cos(p.gamma * aw), scale * w * np.sin(p.gamma * aw)


def sk_encode(w, p=SpiralParams()):
    """Map parameter(s) ``w`` to the spiral pair; scalars in, scalars out."""
    x1, x2 = _theta(w, p)
    if np.ndim(w) == 0:
        return float(x1), float(x2)
    return x1, x2


def sk_decode(y1, y2, p=SpiralParams(), w_max=1.0, grid_n=DECODER_GRID, tol=DECODER_TOL):
    """Nearest point on the union of both arms, searched over ``[-w_max, w_max]``."""
    scalar = np.ndim(y1) == 0
    out = kernels.sk_decode_batch(
        np.atleast_1d(y1), np.atleast_1d(y2), float(w_max), p.delta, p.gamma, grid_n, tol
    )
    return float(out[0]) if scalar else out.reshape(np.shape(y1))


def _depth(factor):
    depth = int(factor).bit_length() - 1
    if 1 << depth != factor:
        raise ValueError(f"SK factor {factor} is not a power of two")
    return depth


def sk_recursive_encode(values, p=SpiralParams(), depth=1, amax=None):
    """Encode every value into ``2**depth`` adjacent real dims.

    After each stage beyond the first, the coordinates are rescaled so their
    largest magnitude equals ``amax`` (the largest input magnitude by default);
    the per-stage scale factors are returned for the decoder.
    Returns ``(dims, scales)`` with ``dims`` of shape ``(n, 2**depth)``.
    """
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if amax is None:
        amax = float(np.max(np.abs(values))) if values.size else 0.0
    x1, x2 = _theta(values, p)
    cur = np.stack([x1, x2], axis=1)
    scales = []
    for _ in range(depth - 1):
        peak = float(np.max(np.abs(cur))) if cur.size else 0.0
        s = amax / peak if peak > 0 and amax > 0 else 1.0
        scales.append(s)
        x1, x2 = _theta(cur * s, p)
        # children of coordinate k land at columns 2k and 2k+1
        cur = np.stack([x1, x2], axis=2).reshape(cur.shape[0], -1)
    return cur, tuple(scales)


def sk_recursive_decode(dims, p=SpiralParams(), depth=1, w_max=1.0, scales=()):
    """Inverse of :func:`sk_recursive_encode`, innermost stage first."""
    cur = np.asarray(dims, dtype=np.float64).reshape(-1, 1 << depth)
    if len(scales) != depth - 1:
        raise ValueError(f"depth {depth} needs {depth - 1} scale factors")
    for s in reversed(scales):
        pairs = cur.reshape(-1, 2)
        decoded = sk_decode(pairs[:, 0], pairs[:, 1], p, w_max)
        cur = decoded.reshape(cur.shape[0], -1) / s
    return sk_decode(cur[:, 0], cur[:, 1], p, w_max)


def repeat_encode(values, r):
    if r < 1:
        raise ValueError("repetition factor must be >= 1")
    return np.repeat(np.atleast_1d(np.asarray(values, dtype=np.float64)), r)


def repeat_decode(dims, r):
    if r < 1:
        raise ValueError("repetition factor must be >= 1")
    return np.asarray(dims, dtype=np.float64).reshape(-1, r).mean(axis=1)


def _encode_layer(values, factor, mode, p):
    amax = float(np.max(np.abs(values))) if values.size else 0.0
    w_max = W_MAX_MARGIN * amax if amax > 0 else 1.0
    if mode == "repeat" or factor == 1:
        return repeat_encode(values, factor), w_max, ()
    dims, scales = sk_recursive_encode(values, p, _depth(factor), amax)
    return dims.ravel(), w_max, scales


def _raw_stream(net, plan, p):
    if plan is None:
        plan = ExpansionPlan.uniform(len(net.layers))
    if len(plan.factors) != len(net.layers):
        raise ValueError(f"plan has {len(plan.factors)} factors for {len(net.layers)} layers")
    parts, layout, offset = [], [], 0
    for layer, factor in zip(net.layers, plan.factors):
        values = layer.flat()
        dims, w_max, scales = _encode_layer(values, factor, plan.mode, p)
        layout.append(LayerLayout(offset, values.size, factor, w_max, scales))
        parts.append(dims)
        offset += dims.size
    return np.concatenate(parts), tuple(layout), plan


def encode_network(net, plan=None, p=SpiralParams(), power=1.0):
    """Flatten layer-major, expand per layer, then power-normalise the whole stream."""
    raw, layout, plan = _raw_stream(net, plan, p)
    sig = normalize_power(raw, power)
    return SymbolStream(sig.dims, layout, sig.gain, plan, p, net.arch_id, power)


def stream_gain(net, plan=None, p=SpiralParams(), power=1.0):
    """Gain that :func:`encode_network` would apply, without building the stream."""
    if plan is None or plan.mode == "repeat":
        factors = plan.factors if plan is not None else (1,) * len(net.layers)
        energy = sum(r * layer.energy() for r, layer in zip(factors, net.layers))
        dims = sum(r * layer.size for r, layer in zip(factors, net.layers))
    else:
        raw, _, _ = _raw_stream(net, plan, p)
        energy, dims = float(raw @ raw), raw.size
    if energy == 0.0:
        raise ValueError("cannot normalise an all-zero network")
    return math.sqrt(power * dims / energy)


def decode_network(received, stream, arch_id=None):
    """Undo the gain and the per-layer codec; returns a usable network."""
    arch_id = arch_id or stream.arch_id
    parse_arch(arch_id)
    y = np.asarray(received, dtype=np.float64)
    if y.size != len(stream):
        raise ValueError(f"received {y.size} dims, stream has {len(stream)}")
    y = y / stream.gain
    values = []
    for lay in stream.layout:
        seg = y[lay.offset : lay.offset + lay.raw_count * lay.factor]
        if stream.plan.mode == "repeat" or lay.factor == 1:
            values.append(repeat_decode(seg, lay.factor))
        else:
            values.append(
                sk_recursive_decode(seg, stream.spiral, _depth(lay.factor), lay.w_max, lay.scales)
            )
    return from_flat(arch_id, np.concatenate(values))


def spiral_gap(p=SpiralParams(), w_max=1.0, inner=0.5, samples=20001):
    """Smallest distance from the outer part of the positive arm to the negative arm.

    Only positive-arm points with ``w`` in ``[inner * w_max, w_max]`` are probed
    (both arms meet at the origin, so the unrestricted minimum is 0).
    """
    u = np.linspace(0.0, w_max, samples)
    nx, ny = _theta(-u, p)
    probe = u[u >= inner * w_max]
    px, py = _theta(probe, p)
    best = np.inf
    for start in range(0, probe.size, 512):
        dx = px[start : start + 512, None] - nx
        dy = py[start : start + 512, None] - ny
        best = min(best, float(np.sqrt(np.min(dx * dx + dy * dy))))
    return best


def sign_threshold(w_max=1.0, grid_n=DECODER_GRID):
    """Magnitude above which a noiseless decode is guaranteed to keep the sign.

    One grid step: below it the refinement bracket may straddle the origin.
    """
    return w_max / (grid_n - 1)
