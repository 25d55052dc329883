"""Binary checkpoint format: round trips, integrity, and hashing."""
import numpy as np
import pytest

from tsdiff.errors import CheckpointError
from tsdiff.nn import checkpoint_hash, load_checkpoint, save_checkpoint, serialize
from tsdiff.nn.checkpoint import MAGIC, deserialize


def _tensors():
    rng = np.random.default_rng(0)
    return {
        "input_proj.weight": rng.normal(size=(3, 8)).astype(np.float32),
        "input_proj.bias": rng.normal(size=(8,)).astype(np.float32),
        "scalarish": np.array([1.5], dtype=np.float32),
        "deep.rank3": rng.normal(size=(2, 3, 4)).astype(np.float32),
    }


def test_round_trip_exact(tmp_path):
    tensors = _tensors()
    path = tmp_path / "model.tsdf"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(tensors)  # order preserved
    for name in tensors:
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], tensors[name])


def test_serialize_deterministic():
    a = serialize(_tensors())
    b = serialize(_tensors())
    assert a == b
    assert a[:4] == MAGIC


def test_value_change_changes_bytes():
    tensors = _tensors()
    a = serialize(tensors)
    tensors["scalarish"] = np.array([1.5000001], dtype=np.float32)
    b = serialize(tensors)
    assert a != b


def test_corruption_detected():
    blob = bytearray(serialize(_tensors()))
    blob[len(blob) // 2] ^= 0xFF
    with pytest.raises(CheckpointError):
        deserialize(bytes(blob))


def test_truncation_detected():
    blob = serialize(_tensors())
    with pytest.raises(CheckpointError):
        deserialize(blob[:-3])


def test_bad_magic_rejected():
    blob = b"NOPE" + serialize(_tensors())[4:]
    with pytest.raises(CheckpointError):
        deserialize(blob)


def test_unknown_version_rejected():
    blob = bytearray(serialize(_tensors()))
    blob[4:8] = (99).to_bytes(4, "little")
    with pytest.raises(CheckpointError):
        deserialize(bytes(blob))


def test_hash_is_stable_and_value_sensitive():
    tensors = _tensors()
    h1 = checkpoint_hash(tensors)
    h2 = checkpoint_hash({k: v.copy() for k, v in tensors.items()})
    assert h1 == h2
    assert len(h1) == 64 and all(c in "0123456789abcdef" for c in h1)
    tensors["input_proj.bias"] = tensors["input_proj.bias"] + 1.0
    assert checkpoint_hash(tensors) != h1


def test_empty_and_zero_size_tensors(tmp_path):
    tensors = {"empty": np.zeros((0, 4), dtype=np.float32)}
    path = tmp_path / "e.tsdf"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert loaded["empty"].shape == (0, 4)


def test_float64_input_stored_as_float32(tmp_path):
    path = tmp_path / "f.tsdf"
    save_checkpoint(path, {"w": np.array([1.0, 2.0], dtype=np.float64)})
    loaded = load_checkpoint(path)
    assert loaded["w"].dtype == np.float32


def test_save_returns_digest_of_file(tmp_path):
    import hashlib
    path = tmp_path / "g.tsdf"
    digest = save_checkpoint(path, _tensors())
    assert digest == hashlib.sha256(path.read_bytes()).hexdigest()


def test_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.tsdf")
