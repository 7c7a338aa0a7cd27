import struct

import numpy as np
import pytest

from core.errors import BadMagicError, ShapeMismatchError, TruncatedCheckpointError, VersionMismatchError
from services.checkpoint import MAGIC, dumps, load_checkpoint, loads, save_checkpoint


@pytest.fixture
def blob(tiny_params, tiny_config):
    return dumps(tiny_params, tiny_config, [0.7, 0.5, 0.25])


def test_round_trip_is_bit_identical(blob, tiny_params, tiny_config):
    checkpoint = loads(blob)
    assert checkpoint.config == tiny_config
    assert checkpoint.history == [0.7, 0.5, 0.25]
    for name, value in tiny_params.tensors.items():
        np.testing.assert_array_equal(checkpoint.params.tensors[name], value)


def test_save_load_save_is_byte_identical(tmp_path, tiny_params, tiny_config):
    save_checkpoint(tmp_path / "a.ckpt", tiny_params, tiny_config, [1.0])
    checkpoint = load_checkpoint(tmp_path / "a.ckpt")
    save_checkpoint(tmp_path / "b.ckpt", checkpoint.params, checkpoint.config, checkpoint.history)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_header_layout(blob):
    assert blob[:8] == MAGIC
    (block_len,) = struct.unpack("<I", blob[8:12])
    block = blob[12:12 + block_len].decode("utf-8")
    assert block.startswith("format_version = 1\n")
    assert "kernel_widths = 1,2\n" in block


def test_bad_magic(blob):
    with pytest.raises(BadMagicError):
        loads(b"NOTCAPS!" + blob[8:])


def test_version_mismatch(blob):
    with pytest.raises(VersionMismatchError):
        loads(b"MKCAPS02" + blob[8:])


def test_truncated_payload(blob):
    with pytest.raises(TruncatedCheckpointError):
        loads(blob[:-5])


def test_corrupt_config_length(blob):
    with pytest.raises(TruncatedCheckpointError):
        loads(blob[:8] + struct.pack("<I", 10**6) + blob[12:])


def test_roi_mismatch_is_shape_error(blob):
    with pytest.raises(ShapeMismatchError, match="116"):
        loads(blob, expected_n_rois=116)


def test_tensor_shape_disagreement(tiny_params, tiny_config):
    tensors = dict(tiny_params.tensors)
    tensors["route.weight"] = np.zeros((3, 2, 3, 3))
    bad = type(tiny_params)(tensors)
    with pytest.raises(ShapeMismatchError, match="route.weight"):
        loads(dumps(bad, tiny_config, []))


def test_overflowing_extents_are_truncation(blob):
    (block_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    offset = len(MAGIC) + 4 + block_len + 4
    (name_len,) = struct.unpack_from("<H", blob, offset)
    offset += 2 + name_len
    rank = blob[offset]
    assert rank >= 2
    extents = list(struct.unpack_from(f"<{rank}Q", blob, offset + 1))
    extents[:2] = [2**32, 2**32]    # product is 2**64 or more
    crafted = blob[:offset + 1] + struct.pack(f"<{rank}Q", *extents) + blob[offset + 1 + 8 * rank:]
    with pytest.raises(TruncatedCheckpointError, match="values"):
        loads(crafted)
