import os
import struct

import numpy as np
import pytest

from airlink.codec import ExpansionPlan, SpiralParams, encode_network
from airlink.data import Dataset, load_csv, make_blobs, save_csv
from airlink.formats import (
    FormatError,
    dump_model,
    load_model,
    load_stream,
    parse_model,
    save_model,
    save_stream,
)
from airlink.nn import Layer, Network

from conftest import random_net


def tiny_net():
    return Network(
        (
            Layer(np.array([[1.0, -2.0]]), np.array([0.5]), "relu"),
            Layer(np.array([[3.0], [4.0]]), np.array([-1.0, 0.25]), "identity"),
        )
    )


class TestModelFormat:
    def test_hand_packed_bytes(self):
        expected = (
            b"AIRN" + struct.pack("<II", 1, 2)
            + struct.pack("<IIB", 1, 2, 1) + struct.pack("<3f", 1.0, -2.0, 0.5)
            + struct.pack("<IIB", 2, 1, 0) + struct.pack("<4f", 3.0, 4.0, -1.0, 0.25)
        )
        assert dump_model(tiny_net()) == expected

    def test_round_trip_is_f32(self, tmp_path):
        net = random_net([3, 7, 2], 0)
        path = tmp_path / "m.airn"
        save_model(net, path)
        back = load_model(path)
        assert back.arch_id == net.arch_id
        np.testing.assert_array_equal(back.flat(), net.flat().astype(np.float32))
        assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]

    @pytest.mark.parametrize("cut", [3, 8, 13, 20, -1])
    def test_truncated(self, cut):
        with pytest.raises(FormatError):
            parse_model(dump_model(tiny_net())[:cut])

    def test_bad_magic_version_and_trailing(self):
        buf = dump_model(tiny_net())
        with pytest.raises(FormatError):
            parse_model(b"XXXX" + buf[4:])
        with pytest.raises(FormatError):
            parse_model(buf[:4] + struct.pack("<I", 2) + buf[8:])
        with pytest.raises(FormatError):
            parse_model(buf + b"\0")

    def test_bad_activation_tag(self):
        buf = bytearray(dump_model(tiny_net()))
        buf[20] = 9
        with pytest.raises(FormatError):
            parse_model(bytes(buf))

    def test_chain_violation(self):
        buf = bytearray(dump_model(tiny_net()))
        buf[33:37] = struct.pack("<I", 2)  # second layer claims 2 inputs
        with pytest.raises(FormatError):
            parse_model(bytes(buf + b"\0" * 8))


class TestStreamFormat:
    @pytest.mark.parametrize("plan", [None, ExpansionPlan((2, 1)), ExpansionPlan((4, 2), "sk")])
    def test_round_trip(self, tmp_path, small_net, plan):
        stream = encode_network(small_net, plan, SpiralParams(1.0, 9.0))
        path = tmp_path / "s.airs"
        save_stream(stream, path)
        back = load_stream(path)
        assert back.layout == stream.layout
        assert back.plan == stream.plan
        assert back.spiral == stream.spiral
        assert back.gain == stream.gain and back.arch_id == stream.arch_id
        np.testing.assert_array_equal(back.dims, stream.dims.astype(np.float32))

    def test_header_layout(self, tmp_path, small_net):
        stream = encode_network(small_net)
        path = tmp_path / "s.airs"
        save_stream(stream, path)
        buf = path.read_bytes()
        assert buf[:4] == b"AIRS"
        assert struct.unpack_from("<IB", buf, 4) == (1, 0)
        assert struct.unpack_from("<d", buf, 9)[0] == stream.gain
        header = 4 + 5 + 32 + 4 + len(stream.arch_id) + 4
        per_layer = 8 + 8 + 4 + 8 + 4  # no scales in repeat mode
        assert len(buf) == header + 2 * per_layer + 8 + 4 * len(stream)

    def test_truncated(self, tmp_path, small_net):
        path = tmp_path / "s.airs"
        save_stream(encode_network(small_net), path)
        buf = path.read_bytes()
        for cut in (10, 50, len(buf) - 3):
            (tmp_path / "t.airs").write_bytes(buf[:cut])
            with pytest.raises(FormatError):
                load_stream(tmp_path / "t.airs")


class TestCsv:
    def test_round_trip(self, tmp_path):
        data = make_blobs(30, seed=2)
        path = tmp_path / "d.csv"
        save_csv(data, path)
        back = load_csv(path)
        np.testing.assert_allclose(back.features, data.features)
        np.testing.assert_array_equal(back.labels, data.labels)

    def test_label_bounds(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 2)), np.array([0, 3]), 3)

    def test_split_and_batches_deterministic(self):
        data = make_blobs(50, seed=0)
        a, b = data.split(0.6, 1)
        assert len(a) + len(b) == 50
        from airlink.rng import make_rng

        order1 = [yb.tolist() for _, yb in data.batches(8, make_rng(3))]
        order2 = [yb.tolist() for _, yb in data.batches(8, make_rng(3))]
        assert order1 == order2 and sum(map(len, order1)) == 50
