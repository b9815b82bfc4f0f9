"""Binary file formats.

AIRN v1 (model)::

    b"AIRN" | u32 version=1 | u32 layer_count
    per layer: u32 out | u32 in | u8 activation (0 identity, 1 relu)
               | f32[out*in] weights row-major | f32[out] bias

AIRS v1 (symbol stream, debugging aid)::

    b"AIRS" | u32 version=1 | u8 mode (0 repeat, 1 sk)
    | f64 gain | f64 power | f64 delta | f64 gamma
    | u32 arch_len | utf-8 arch_id
    | u32 layer_count
    per layer: u64 offset | u64 raw_count | u32 factor | f64 w_max
               | u32 n_scales | f64[n_scales] scales
    | u64 dim_count | f32[dim_count] dims

All integers and floats are little-endian.
"""

import os
import struct
import tempfile

import numpy as np

from .codec import ExpansionPlan, LayerLayout, SpiralParams, SymbolStream
from .nn import Layer, Network

__all__ = ["FormatError", "save_model", "load_model", "dump_model", "parse_model",
           "save_stream", "load_stream"]

_ACT_TAGS = {"identity": 0, "relu": 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}
_MODES = {"repeat": 0, "sk": 1}


class FormatError(ValueError):
    pass


def dump_model(net):
    out = [b"AIRN", struct.pack("<II", 1, len(net.layers))]
    for layer in net.layers:
        out.append(struct.pack("<IIB", layer.n_out, layer.n_in, _ACT_TAGS[layer.activation]))
        out.append(layer.weights.astype("<f4").tobytes())
        out.append(layer.bias.astype("<f4").tobytes())
    return b"".join(out)


def parse_model(buf):
    if buf[:4] != b"AIRN":
        raise FormatError("not an AIRN file")
    if len(buf) < 12:
        raise FormatError("truncated AIRN header")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != 1:
        raise FormatError(f"unsupported AIRN version {version}")
    pos, layers = 12, []
    try:
        for _ in range(count):
            n_out, n_in, tag = struct.unpack_from("<IIB", buf, pos)
            pos += 9
            w = np.frombuffer(buf, "<f4", n_out * n_in, pos).astype(np.float64)
            pos += 4 * n_out * n_in
            b = np.frombuffer(buf, "<f4", n_out, pos).astype(np.float64)
            pos += 4 * n_out
            layers.append(Layer(w.reshape(n_out, n_in), b, _TAG_ACTS[tag]))
    except (struct.error, ValueError, KeyError) as exc:
        raise FormatError(f"truncated or corrupt AIRN data: {exc}") from None
    if pos != len(buf):
        raise FormatError("trailing bytes after AIRN payload")
    try:
        return Network(tuple(layers))
    except ValueError as exc:
        raise FormatError(f"AIRN layers do not form a network: {exc}") from None


def _atomic_write(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(net, path):
    _atomic_write(path, dump_model(net))


def load_model(path):
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def save_stream(stream, path):
    arch = stream.arch_id.encode()
    out = [
        b"AIRS",
        struct.pack("<IB", 1, _MODES[stream.plan.mode]),
        struct.pack("<dddd", stream.gain, stream.power, stream.spiral.delta, stream.spiral.gamma),
        struct.pack("<I", len(arch)),
        arch,
        struct.pack("<I", len(stream.layout)),
    ]
    for lay in stream.layout:
        out.append(struct.pack("<QQIdI", lay.offset, lay.raw_count, lay.factor, lay.w_max,
                               len(lay.scales)))
        out.append(struct.pack(f"<{len(lay.scales)}d", *lay.scales))
    out.append(struct.pack("<Q", stream.dims.size))
    out.append(stream.dims.astype("<f4").tobytes())
    _atomic_write(path, b"".join(out))


def load_stream(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != b"AIRS":
        raise FormatError("not an AIRS file")
    try:
        version, mode = struct.unpack_from("<IB", buf, 4)
        if version != 1:
            raise FormatError(f"unsupported AIRS version {version}")
        gain, power, delta, gamma = struct.unpack_from("<dddd", buf, 9)
        pos = 41
        (arch_len,) = struct.unpack_from("<I", buf, pos)
        arch_id = buf[pos + 4 : pos + 4 + arch_len].decode()
        pos += 4 + arch_len
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        layout = []
        for _ in range(count):
            offset, raw, factor, w_max, n_scales = struct.unpack_from("<QQIdI", buf, pos)
            pos += struct.calcsize("<QQIdI")
            scales = struct.unpack_from(f"<{n_scales}d", buf, pos)
            pos += 8 * n_scales
            layout.append(LayerLayout(offset, raw, factor, w_max, tuple(scales)))
        (n,) = struct.unpack_from("<Q", buf, pos)
        dims = np.frombuffer(buf, "<f4", n, pos + 8).astype(np.float64)
        if pos + 8 + 4 * n != len(buf):
            raise FormatError("trailing bytes after AIRS payload")
        mode_name = {v: k for k, v in _MODES.items()}[mode]
        plan = ExpansionPlan(tuple(lay.factor for lay in layout), mode_name)
    except FormatError:
        raise
    except (struct.error, ValueError, KeyError) as exc:
        raise FormatError(f"truncated or corrupt AIRS data: {exc}") from None
    return SymbolStream(dims, tuple(layout), gain, plan, SpiralParams(delta, gamma), arch_id, power)
