"""Tests for the binary checkpoint format."""

import struct

import numpy as np
import pytest

from mgrlab.diffcore import RngStream
from mgrlab.models import (
    CheckpointError,
    Finder,
    build_main_model,
    checkpoint_arrays,
    read_checkpoint,
    restore_checkpoint,
    write_checkpoint,
)
from mgrlab.models.checkpoint import decode_checkpoint, encode_checkpoint


@pytest.fixture
def arrays():
    return {
        "model.w": np.arange(6.0).reshape(2, 3),
        "model.b": np.array([0.5, -0.25]),
        "scalar": np.array(3.0),
    }


# This class keeps the test checkpoint data and behavior in one place.
class TestCheckpoint:
    def test_file_round_trip(self, arrays, tmp_path):
        path = write_checkpoint(tmp_path / "c" / "best.mgrl", arrays)
        loaded = read_checkpoint(path)

        assert list(loaded) == list(arrays)
        for name, values in arrays.items():
            np.testing.assert_array_equal(loaded[name], values)
            assert loaded[name].shape == values.shape

    def test_scalar_keeps_zero_dims(self):
        blob = encode_checkpoint({"s": np.array(-1.5)})

        assert struct.unpack_from("<B", blob, 13) == (0,)
        loaded = decode_checkpoint(blob)["s"]
        assert loaded.shape == ()
        assert loaded.item() == -1.5

    def test_transposed_block_is_written_in_row_order(self):
        values = np.arange(6.0).reshape(2, 3).T

        loaded = decode_checkpoint(encode_checkpoint({"t": values}))["t"]

        np.testing.assert_array_equal(loaded, values)

    def test_header_layout(self, arrays):
        blob = encode_checkpoint(arrays)

        assert blob[:4] == b"MGRL"
        assert struct.unpack_from("<HI", blob, 4) == (1, 3)

    def test_bad_magic(self, arrays):
        blob = b"XXXX" + encode_checkpoint(arrays)[4:]

        with pytest.raises(CheckpointError, match="magic"):
            decode_checkpoint(blob)

    def test_unknown_version(self, arrays):
        blob = bytearray(encode_checkpoint(arrays))
        blob[4:6] = struct.pack("<H", 9)

        with pytest.raises(CheckpointError, match="version 9"):
            decode_checkpoint(bytes(blob))

    def test_truncated(self, arrays):
        blob = encode_checkpoint(arrays)

        with pytest.raises(CheckpointError):
            decode_checkpoint(blob[:-5])

    def test_trailing_bytes(self, arrays):
        with pytest.raises(CheckpointError, match="trailing"):
            decode_checkpoint(encode_checkpoint(arrays) + b"\x00")

    def test_restore_model_and_finder(self, tmp_path):
        model = build_main_model(2, (6,), 4, 3, RngStream(1, "a"))
        finder = Finder("plain-mlp", 4, RngStream(1, "f"))
        path = write_checkpoint(
            tmp_path / "best.mgrl", checkpoint_arrays(model, finder)
        )

        fresh = build_main_model(2, (6,), 4, 3, RngStream(2, "a"))
        fresh_finder = Finder("plain-mlp", 4, RngStream(2, "f"))
        restore_checkpoint(read_checkpoint(path), fresh, fresh_finder)

        for a, b in zip(
            [*model.parameters(), *finder.parameters()],
            [*fresh.parameters(), *fresh_finder.parameters()],
            strict=True,
        ):
            np.testing.assert_array_equal(a.values, b.values)
