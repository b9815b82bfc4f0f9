"""Reproducible random streams.

Every stream is a Philox counter-based generator keyed from a root seed plus
an arbitrary tuple of integer keys (trial index, layer index, ...), so
sub-streams can be derived independently and in any order.  Gaussian draws
use the Box-Muller transform on the generator's uniform doubles, which keeps
the normal samples defined by a documented formula rather than by numpy's
internal ziggurat tables.
"""

import numpy as np

__all__ = ["make_rng", "derive_seed", "gaussian", "complex_gaussian"]


def make_rng(seed, *keys):
    """Return a Philox generator for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed, *keys):
    """Collapse ``(seed, *keys)`` into a single 63-bit integer seed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0] >> 1)


def gaussian(rng, size, std=1.0):
    """Zero-mean normal samples via Box-Muller.

    ``u1`` is drawn from (0, 1] so the logarithm is always finite.
    """
    n = int(np.prod(size)) if np.ndim(size) else int(size)
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return (std * z[:n]).reshape(size)


def complex_gaussian(rng, size, variance=1.0):
    """Circularly-symmetric complex normal CN(0, variance)."""
    parts = gaussian(rng, (2,) + tuple(np.atleast_1d(size)), std=np.sqrt(variance / 2.0))
    return (parts[0] + 1j * parts[1]).reshape(size)
