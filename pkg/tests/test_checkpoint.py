import struct

import numpy as np
import pytest

from dmr_rec.checkpoint import (
    HEADER,
    MAGIC,
    PREFIX,
    load_checkpoint,
    manifest_path,
    read_manifest,
    save_checkpoint,
)
from dmr_rec.errors import DataError
from dmr_rec.model import TRAINABLE
from dmr_rec.training import AdamState


def assert_same_params(a, b):
    for name in TRAINABLE:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert (a.time_scale, a.time_power, a.neg_weight, a.item_ids) == (b.time_scale, b.time_power, b.neg_weight, b.item_ids)


def test_round_trip_with_state(tmp_path, make_params):
    params = make_params(0, dim=3, trends=2, n_items=4, time_scale=12.5, time_power=1.5, neg_weight=0.25)
    state = AdamState.fresh(params)
    for name in TRAINABLE:
        state.first[name] += 0.1
        state.second[name] += 0.2
    state.step = 17
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(params, state, path, epochs_done=3, config_hash="abc")

    checkpoint = load_checkpoint(path)
    assert_same_params(checkpoint.params, params)
    assert checkpoint.epochs_done == 3
    assert checkpoint.state.step == 17
    for name in TRAINABLE:
        np.testing.assert_array_equal(checkpoint.state.first[name], state.first[name])
        np.testing.assert_array_equal(checkpoint.state.second[name], state.second[name])


def test_round_trip_without_state(tmp_path, make_params):
    params = make_params(1)
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(params, None, path)
    checkpoint = load_checkpoint(path)
    assert checkpoint.state is None
    assert_same_params(checkpoint.params, params)


def test_loaded_tensors_are_writable(tmp_path, make_params):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(make_params(2), None, path)
    params = load_checkpoint(path).params
    params.item_embeddings[0, 0] += 1.0


def test_layout(tmp_path, make_params):
    params = make_params(3, dim=2, trends=1, n_items=3)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, None, str(path))
    data = path.read_bytes()
    magic, version = PREFIX.unpack_from(data)
    assert magic == MAGIC and version == 1
    dim, trends, n_items, *_ = HEADER.unpack_from(data, PREFIX.size)
    assert (dim, trends, n_items) == (2, 1, 3)
    first = struct.unpack_from("<d", data, PREFIX.size + HEADER.size)[0]
    assert first == params.item_embeddings[0, 0]
    assert data.endswith(b"i0\ni1\ni2")


def test_manifest(tmp_path, make_params):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(make_params(4, dim=5, trends=3, n_items=7), None, path, epochs_done=2, config_hash="f00")
    assert manifest_path(path).exists()
    manifest = read_manifest(path)
    assert manifest["config_hash"] == "f00"
    assert (manifest["dim"], manifest["trends"], manifest["items"]) == ("5", "3", "7")
    assert manifest["epochs_done"] == "2"
    assert manifest["adam_state"] == "0"
    assert len(manifest["sha256"]) == 64


def test_truncated(tmp_path, make_params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(make_params(5), None, str(path))
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(DataError, match=f"expected {len(data)} bytes, found {len(data) - 10}"):
        load_checkpoint(str(path))
    path.write_bytes(data[:5])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(str(path))


def test_wrong_version(tmp_path, make_params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(make_params(6), None, str(path))
    data = bytearray(path.read_bytes())
    data[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 9)
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match="version 9, expected 1"):
        load_checkpoint(str(path))


def test_foreign_file(tmp_path):
    path = tmp_path / "model.ckpt"
    path.write_bytes(b"x" * 200)
    with pytest.raises(DataError, match="not a checkpoint"):
        load_checkpoint(str(path))


def test_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "absent.ckpt"))
