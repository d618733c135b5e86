"""Test modules/nets.py"""
import struct

import numpy as np
import pytest

from errors import BadMagicError, ConfigError, TruncatedFileError, ValidationError, VersionMismatchError
from modules.nets import (
    DISCRIMINATOR, GENERATOR, NetSpec, decode_checkpoint, discriminator_spec, encode_checkpoint,
    generator_spec, init_net, load_checkpoint, save_checkpoint
)
from rng import Xoshiro256pp


def test_spec_defaults_follow_network_kind():
    g = generator_spec([4, 8, 9])
    d = discriminator_spec([9, 8, 1])
    assert (g.hidden_activation, g.output_activation) == ("relu", "tanh")
    assert (d.hidden_activation, d.output_activation) == ("leaky_relu", "sigmoid")
    assert g.kind == GENERATOR and d.kind == DISCRIMINATOR
    assert g.input_dim == 4 and g.output_dim == 9 and g.layer_count == 2


@pytest.mark.parametrize("kind, dims", [
    (GENERATOR, [4]),
    (GENERATOR, [4, 0, 2]),
    (DISCRIMINATOR, [9, 8, 2]),
    ("critic", [4, 1]),
])
def test_spec_rejects_invalid_dims(kind, dims):
    with pytest.raises(ConfigError):
        NetSpec(kind, tuple(dims))


def test_init_is_deterministic_with_zero_biases():
    spec = generator_spec([8, 16, 32])
    a = init_net(spec, Xoshiro256pp(1))
    b = init_net(spec, Xoshiro256pp(1))
    assert a.same_as(b)
    assert all(not layer.bias.any() for layer in a.layers)
    assert a.seed == 1


def test_init_weight_statistics():
    net = init_net(generator_spec([100, 100]), Xoshiro256pp(77))
    weights = net.layers[0].weight.ravel()
    assert weights.size == 10_000
    assert abs(weights.mean()) < 0.001
    assert abs(weights.std() - 0.02) < 0.002


def test_checkpoint_round_trip_is_bitwise(tmp_path, tanh_net):
    path = tmp_path / "g.bin"
    save_checkpoint(tanh_net, path)
    loaded = load_checkpoint(path)
    assert loaded.same_as(tanh_net)
    assert encode_checkpoint(loaded) == path.read_bytes()


def test_discriminator_round_trip_keeps_activations():
    net = init_net(discriminator_spec([2, 5, 1]), Xoshiro256pp(3))
    loaded = decode_checkpoint(encode_checkpoint(net))
    assert loaded.spec == net.spec
    assert [layer.activation for layer in loaded.layers] == ["leaky_relu", "sigmoid"]


def test_corrupt_magic_is_rejected(tanh_net):
    buf = bytearray(encode_checkpoint(tanh_net))
    buf[0] ^= 0xFF
    with pytest.raises(BadMagicError):
        decode_checkpoint(bytes(buf))


def test_version_mismatch_is_rejected(tanh_net):
    buf = bytearray(encode_checkpoint(tanh_net))
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(VersionMismatchError):
        decode_checkpoint(bytes(buf))


def test_truncated_checkpoint_names_byte_counts(tanh_net):
    buf = encode_checkpoint(tanh_net)
    cut = buf[: len(buf) // 2]
    with pytest.raises(TruncatedFileError) as info:
        decode_checkpoint(cut)
    assert info.value.expected == len(buf)
    assert info.value.actual == len(cut)
    assert f"expected {len(buf)} bytes, got {len(cut)}" in str(info.value)


def test_layer_chain_break_is_a_validation_error(tanh_net):
    buf = bytearray(encode_checkpoint(tanh_net))
    # second layer table entry starts after header (8) + kind/count (5) + first entry (9)
    struct.pack_into("<I", buf, 8 + 5 + 9, 15)
    with pytest.raises(ValidationError):
        decode_checkpoint(bytes(buf))


def test_trailing_bytes_are_rejected(tanh_net):
    with pytest.raises(ValidationError):
        decode_checkpoint(encode_checkpoint(tanh_net) + b"\x00")
