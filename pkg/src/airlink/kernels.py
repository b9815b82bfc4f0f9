"""Backend selection for the hot decoding kernel.

The compiled ``_sk_native`` extension is used when it imports; otherwise, or
when ``AIRLINK_PURE_PYTHON=1`` is set, the numpy fallback is used.  Both
implement the same grid scan + fixed-length golden-section search.
"""

import os

from . import _sk_python

__all__ = ["BACKEND", "sk_decode_batch", "python_sk_decode_batch", "native_sk_decode_batch"]

python_sk_decode_batch = _sk_python.sk_decode_batch
native_sk_decode_batch = None

try:
    from ._sk_native import sk_decode_batch as native_sk_decode_batch
except ImportError:  # extension not built
    pass

if native_sk_decode_batch is not None and os.environ.get("AIRLINK_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
    sk_decode_batch = native_sk_decode_batch
else:
    BACKEND = "python"
    sk_decode_batch = python_sk_decode_batch
