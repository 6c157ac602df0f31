import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modecomb.archive import (MAGIC, config_digest, decode_permutation, decode_weights, encode_permutation,
                              encode_weights, load_permutation, load_weights, load_weights_with_metadata,
                              save_permutation, save_weights)
from modecomb.errors import DimensionError, FormatError, ValidationError
from modecomb.nets import Architecture, flatten, unflatten
from modecomb.training import TrainConfig

from conftest import random_model, random_perms

ARCH = Architecture(5, 3, depth=3, base_width=4)


def test_round_trip_is_bit_exact(tmp_path):
    theta = random_model(ARCH, 0)
    path = tmp_path / "m.mcw"
    save_weights(theta, path, {"seed": 7})
    back, meta = load_weights_with_metadata(path)
    assert back.equals(theta) and meta == {"seed": 7}
    assert flatten(back).tobytes() == flatten(theta).tobytes()
    save_weights(back, tmp_path / "again.mcw", {"seed": 7})
    assert (tmp_path / "again.mcw").read_bytes() == path.read_bytes()


def test_layout_on_disk():
    theta = random_model(ARCH, 1)
    blob = encode_weights(theta)
    magic, head_len = struct.unpack_from("<4sI", blob)
    assert magic == MAGIC == b"MCW1"
    header = json.loads(blob[8:8 + head_len])
    assert header["architecture"]["depth"] == 3
    assert [e["name"] for e in header["entries"]][:4] == ["layer1.weight", "layer1.bias", "layer1.gain", "layer1.offset"]
    assert all(e["dtype"] == "f32" for e in header["entries"])
    payload = np.frombuffer(blob[8 + head_len:], dtype="<f4")
    assert np.array_equal(payload, flatten(theta))


def test_special_values_survive():
    theta = random_model(ARCH, 2)
    vec = flatten(theta).copy()
    vec[:3] = [-0.0, 1e-45, np.finfo(np.float32).max]
    m = unflatten(vec, ARCH)
    assert flatten(decode_weights(encode_weights(m))[0]).tobytes() == vec.tobytes()


def test_corrupt_magic():
    blob = bytearray(encode_weights(random_model(ARCH, 3)))
    blob[0] ^= 0xFF
    with pytest.raises(FormatError) as info:
        decode_weights(bytes(blob))
    assert info.value.offset == 0


@pytest.mark.parametrize("cut", [0, 3, 7, 20])
def test_truncated_header(cut):
    blob = encode_weights(random_model(ARCH, 4))
    with pytest.raises(FormatError):
        decode_weights(blob[:cut])


def test_payload_count_mismatch():
    arch = Architecture(2, 2, depth=2, base_width=1, layernorm=False)
    blob = encode_weights(random_model(arch, 5))
    # drop one whole float: header promises more values than stored
    with pytest.raises(DimensionError):
        decode_weights(blob[:-4])
    with pytest.raises(FormatError):
        decode_weights(blob[:-1])


def test_header_claims_2x2_but_three_floats():
    header = {"architecture": {"input_dim": 2, "num_classes": 2, "depth": 2, "base_width": 2,
                               "width_multiplier": 1, "layernorm": False},
              "entries": [{"name": "layer1.weight", "shape": [2, 2], "dtype": "f32"}], "metadata": {}}
    head = json.dumps(header).encode()
    blob = struct.pack("<4sI", MAGIC, len(head)) + head + np.zeros(3, "<f4").tobytes()
    with pytest.raises(ValidationError):
        decode_weights(blob)


def test_entries_must_match_architecture():
    blob = encode_weights(random_model(ARCH, 6))
    _, head_len = struct.unpack_from("<4sI", blob)
    header = json.loads(blob[8:8 + head_len])
    header["entries"][0]["shape"] = [5, 4]
    head = json.dumps(header).encode()
    with pytest.raises(ValidationError):
        decode_weights(struct.pack("<4sI", MAGIC, len(head)) + head + blob[8 + head_len:])


def test_unreadable_header():
    head = b"{not json"
    with pytest.raises(FormatError):
        decode_weights(struct.pack("<4sI", MAGIC, len(head)) + head)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_many_round_trips(seed):
    theta = random_model(ARCH, seed)
    blob = encode_weights(theta, {"seed": seed})
    back, meta = decode_weights(blob)
    assert back.equals(theta) and meta["seed"] == seed
    assert encode_weights(back, meta) == blob


def test_permutation_files(tmp_path):
    pi = random_perms(ARCH, 8)
    path = tmp_path / "pi.json"
    save_permutation(pi, path)
    assert load_permutation(path) == pi
    doc = json.loads(path.read_text())
    assert doc["format"] == "mcperm1" and doc["perms"][0] == pi.perms[0].tolist()
    with pytest.raises(FormatError):
        decode_permutation("[1, 2")
    with pytest.raises(FormatError):
        decode_permutation(json.dumps({"format": "other", "perms": []}))
    with pytest.raises(ValidationError):
        decode_permutation(json.dumps({"format": "mcperm1", "perms": [[0, 0]]}))
    assert decode_permutation(encode_permutation(pi)) == pi


def test_missing_file_is_an_os_error(tmp_path):
    with pytest.raises(OSError):
        load_weights(tmp_path / "absent.mcw")


def test_config_digest_is_stable():
    a = config_digest(TrainConfig(seed=1))
    assert a == config_digest(TrainConfig(seed=1))
    assert a != config_digest(TrainConfig(seed=2))
    assert len(a) == 64
