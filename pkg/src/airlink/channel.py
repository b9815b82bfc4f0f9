"""Power normalisation, AWGN / block-Rayleigh transmission and zero-forcing
equalisation.

Streams are real vectors.  Consecutive pairs of real dimensions form one
complex channel symbol, so noise of complex variance ``sigma2`` contributes
``sigma2 / 2`` to every real dimension.  An odd-length stream is padded with
a zero dimension internally for the complex view of fading.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .rng import complex_gaussian, gaussian

__all__ = [
    "NOISELESS",
    "ChannelSpec",
    "NormalizedSignal",
    "FadeDraw",
    "Equalized",
    "snr_to_noise_variance",
    "normalize_power",
    "transmit",
    "equalize",
]

#: snr_db sentinel meaning "no noise"
NOISELESS = math.inf

ERASURE_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "awgn"
    snr_db: float = 10.0
    sigma_h: float = 1.0
    seed: int = 0
    block_len: int = 0  # real dims per fading block, 0 = whole stream

    def __post_init__(self):
        if self.kind not in ("awgn", "rayleigh_block"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.sigma_h <= 0:
            raise ValueError("sigma_h must be positive")
        if self.block_len < 0 or self.block_len % 2:
            raise ValueError("block_len must be a non-negative even number of real dims")


@dataclass(frozen=True)
class NormalizedSignal:
    dims: np.ndarray
    gain: float
    power_budget: float = 1.0


@dataclass(frozen=True)
class FadeDraw:
    h: complex
    start: int  # first real dim of the block
    block_len: int


@dataclass
class Equalized:
    dims: np.ndarray
    erased_blocks: list = field(default_factory=list)


def snr_to_noise_variance(snr_db):
    """Complex noise variance for unit signal power; per real dim use half of it."""
    if snr_db == NOISELESS:
        return 0.0
    return 10.0 ** (-snr_db / 10.0)


def normalize_power(raw, power=1.0):
    raw = np.asarray(raw, dtype=np.float64)
    peak = float(np.max(np.abs(raw))) if raw.size else 0.0
    if peak == 0.0:
        raise ValueError("cannot normalise an all-zero signal")
    unit = raw / peak  # avoids under/overflow in the energy sum
    scale = math.sqrt(power * raw.size / float(unit @ unit))
    # dims come from ``unit`` so they stay finite even when the gain overflows
    # (subnormal input); the gain itself is then inf
    return NormalizedSignal(scale * unit, scale / peak, power)


def _blocks(n, block_len):
    step = block_len or n + (n % 2)
    return [(start, min(step, n - start)) for start in range(0, n, step)]


def transmit(sig, spec, rng):
    """Send ``sig`` through the channel.

    Returns ``(received, fades)``; ``fades`` is ``None`` for AWGN and a list of
    :class:`FadeDraw` (one per block) for block fading.
    """
    x = np.asarray(getattr(sig, "dims", sig), dtype=np.float64)
    sigma2 = snr_to_noise_variance(spec.snr_db)
    if spec.kind == "awgn":
        if sigma2 == 0.0:
            return x.copy(), None
        return x + gaussian(rng, x.shape, std=math.sqrt(sigma2 / 2.0)), None

    y = np.empty_like(x)
    fades = []
    for start, length in _blocks(x.size, spec.block_len):
        h = complex(complex_gaussian(rng, (), variance=spec.sigma_h**2))
        seg = x[start : start + length]
        sym = _as_complex(seg)
        out = h * sym
        if sigma2 > 0.0:
            out = out + complex_gaussian(rng, sym.shape, variance=sigma2)
        if length % 2 and abs(h) > 0.0:
            out[-1] = (h.conjugate() * out[-1]).real / abs(h)
        y[start : start + length] = _as_real(out, length)
        fades.append(FadeDraw(h, start, length))
    return y, fades


def equalize(received, fades):
    """Zero-forcing: scale every block by ``conj(h) / |h|^2``.

    Blocks whose ``|h|`` is below 1e-12 are erased (set to 0) and listed in
    ``erased_blocks``.
    """
    y = np.asarray(received, dtype=np.float64)
    if fades is None:
        return Equalized(y.copy())
    out = np.empty_like(y)
    erased = []
    for k, fade in enumerate(fades):
        seg = y[fade.start : fade.start + fade.block_len]
        if abs(fade.h) < ERASURE_THRESHOLD:
            out[fade.start : fade.start + fade.block_len] = 0.0
            erased.append(k)
            continue
        sym = _as_complex(seg) * (fade.h.conjugate() / abs(fade.h) ** 2)
        if fade.block_len % 2:
            sym[-1] = seg[-1] / abs(fade.h)  # matched-filter tail, see module doc
        out[fade.start : fade.start + fade.block_len] = _as_real(sym, fade.block_len)
    return Equalized(out, erased)


def _as_complex(seg):
    if seg.size % 2:
        seg = np.append(seg, 0.0)
    return seg[0::2] + 1j * seg[1::2]


def _as_real(sym, length):
    out = np.empty(2 * sym.size)
    out[0::2] = sym.real
    out[1::2] = sym.imag
    return out[:length]
