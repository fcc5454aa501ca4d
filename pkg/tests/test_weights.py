import struct

import numpy as np
import pytest

from bdrnilm.network import build_network
from bdrnilm.weights import (
    MAGIC,
    WeightsFormatError,
    decode_arrays,
    encode_arrays,
    load_weights,
    read_weights,
    save_weights,
)


def _trained_like(config, seed=3):
    net = build_network(config, seed=seed)
    net.forward(np.random.default_rng(seed).standard_normal((4, 1, config.window_length)), mode="train")
    return net


def test_round_trip_is_bitwise(tmp_path, small_config):
    net = _trained_like(small_config)
    path = tmp_path / "m.bdrn"
    save_weights(net, path)
    back = load_weights(path, small_config)
    a, b = net.state_arrays(), back.state_arrays()
    assert list(a) == list(b)
    for name in a:
        assert a[name].dtype == b[name].dtype
        assert a[name].tobytes() == b[name].tobytes(), name
    save_weights(back, tmp_path / "again.bdrn")
    assert path.read_bytes() == (tmp_path / "again.bdrn").read_bytes()


def test_loaded_model_predicts_identically(tmp_path, small_config):
    net = _trained_like(small_config)
    save_weights(net, tmp_path / "m.bdrn")
    back = load_weights(tmp_path / "m.bdrn", small_config)
    x = np.random.default_rng(0).standard_normal((3, 1, 99)).astype(np.float32)
    np.testing.assert_array_equal(net.forward(x), back.forward(x))


def test_header_layout():
    blob = encode_arrays({"w": np.arange(6, dtype=np.float32).reshape(2, 3)})
    assert blob[:4] == MAGIC
    assert struct.unpack("<III", blob[4:16]) == (1, 1, 1)
    assert blob[16:17] == b"w"
    assert struct.unpack("<III", blob[17:29]) == (2, 2, 3)
    assert np.frombuffer(blob[29:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_truncated_file_names_the_array(small_config):
    blob = encode_arrays(build_network(small_config).state_arrays())
    with pytest.raises(WeightsFormatError, match="truncated.*running_var"):
        decode_arrays(blob[:-2])


def test_version_and_magic_errors():
    blob = bytearray(encode_arrays({"a": np.zeros(2, np.float32)}))
    bad_version = bytes(blob[:4]) + struct.pack("<I", 2) + bytes(blob[8:])
    with pytest.raises(WeightsFormatError, match="version 2"):
        decode_arrays(bad_version)
    with pytest.raises(WeightsFormatError, match="magic"):
        decode_arrays(b"XXXX" + bytes(blob[4:]))
    with pytest.raises(WeightsFormatError, match="trailing"):
        decode_arrays(bytes(blob) + b"\0")


def test_incompatible_config_lists_shapes(tmp_path, small_config, tiny_config):
    save_weights(build_network(small_config), tmp_path / "m.bdrn")
    with pytest.raises(ValueError, match="incompatible") as err:
        load_weights(tmp_path / "m.bdrn", tiny_config)
    assert "input.conv.weight" in str(err.value)


def test_read_weights_returns_float32(tmp_path, tiny_config):
    save_weights(build_network(tiny_config), tmp_path / "m.bdrn")
    arrays = read_weights(tmp_path / "m.bdrn")
    assert all(v.dtype == np.float32 for v in arrays.values())
