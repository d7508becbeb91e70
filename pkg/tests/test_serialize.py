"""Manifest + blob tensor file format."""

import numpy as np
import pytest

from loopmem.serialize import CorruptCheckpointError, load_tensors, save_tensors


def test_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "w": rng.standard_normal((3, 4)),
        "b": rng.standard_normal(4),
        "scalar": np.asarray(3.25),
        "half": rng.standard_normal(5).astype(np.float32),
    }
    path = tmp_path / "t.bin"
    save_tensors(path, tensors, extra={"step": 7})
    back, extra = load_tensors(path)
    assert extra == {"step": 7}
    assert set(back) == set(tensors)
    for name in tensors:
        assert back[name].dtype == tensors[name].dtype
        assert np.array_equal(back[name], tensors[name])


def test_truncated_blob_rejected(tmp_path):
    path = tmp_path / "t.bin"
    save_tensors(path, {"w": np.ones((8, 8))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(CorruptCheckpointError, match="blob length"):
        load_tensors(path)


def test_extended_blob_rejected(tmp_path):
    path = tmp_path / "t.bin"
    save_tensors(path, {"w": np.ones(4)})
    path.write_bytes(path.read_bytes() + b"tail")
    with pytest.raises(CorruptCheckpointError):
        load_tensors(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(b"NOTMINE!" + b"\0" * 32)
    with pytest.raises(CorruptCheckpointError, match="magic"):
        load_tensors(path)


def test_garbled_manifest_rejected(tmp_path):
    path = tmp_path / "t.bin"
    save_tensors(path, {"w": np.ones(2)})
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF  # corrupt a manifest byte
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptCheckpointError):
        load_tensors(path)


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(ValueError, match="dtype"):
        save_tensors(tmp_path / "t.bin", {"w": np.ones(2, dtype=np.int32)})
