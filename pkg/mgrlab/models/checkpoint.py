"""Versioned binary checkpoints for model and finder parameters.

Layout (all integers little-endian)::

    b"MGRL"            magic
    u16                format version
    u32                number of blocks
    per block:
      u16 + bytes      parameter name, UTF-8
      u8               number of dimensions
      u32 * ndim       shape
      f64 * size       values, row-major
"""

from __future__ import annotations

import logging
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from mgrlab.atomic import atomic_write_bytes
from mgrlab.models.errors import CheckpointError
from mgrlab.models.networks import Finder, MainModel

logger = logging.getLogger(__name__)

MAGIC = b"MGRL"
FORMAT_VERSION = 1


# This function encodes the checkpoint work used in this file.
def encode_checkpoint(arrays: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(arrays))]
    for name, values in arrays.items():
        values = np.asarray(values, dtype="<f8", order="C")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.tobytes())
    return b"".join(chunks)


# This function decodes the checkpoint work used in this file.
def decode_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not an MGRL checkpoint (bad magic bytes)")
    try:
        version, count = struct.unpack_from("<HI", blob, 4)
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version}, "
                f"expected {FORMAT_VERSION}"
            )
        offset = 10
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            end = offset + 8 * size
            if end > len(blob):
                raise CheckpointError(f"truncated block '{name}'")
            arrays[name] = (
                np.frombuffer(blob[offset:end], dtype="<f8")
                .reshape(shape)
                .astype(np.float64)
            )
            offset = end
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    if offset != len(blob):
        raise CheckpointError(
            f"{len(blob) - offset} trailing bytes after last block"
        )
    return arrays


# This function writes the checkpoint work used in this file.
def write_checkpoint(path: Path, arrays: Mapping[str, np.ndarray]) -> Path:
    path = atomic_write_bytes(path, encode_checkpoint(arrays))
    logger.debug("Wrote checkpoint %s (%d blocks)", path, len(arrays))
    return path


# This function reads the checkpoint work used in this file.
def read_checkpoint(path: Path) -> dict[str, np.ndarray]:
    return decode_checkpoint(Path(path).read_bytes())


# This function collects the checkpoint arrays work used in this file.
def checkpoint_arrays(
    model: MainModel, finder: Finder | None = None
) -> dict[str, np.ndarray]:
    arrays = {f"model.{k}": v for k, v in model.state_dict().items()}
    if finder is not None:
        arrays.update(
            {f"finder.{k}": v for k, v in finder.state_dict().items()}
        )
    return arrays


# This function restores the checkpoint work used in this file.
def restore_checkpoint(
    arrays: Mapping[str, np.ndarray],
    model: MainModel,
    finder: Finder | None = None,
) -> None:
    model.load_state_dict(
        {k[6:]: v for k, v in arrays.items() if k.startswith("model.")}
    )
    if finder is not None:
        finder.load_state_dict(
            {k[7:]: v for k, v in arrays.items() if k.startswith("finder.")}
        )
