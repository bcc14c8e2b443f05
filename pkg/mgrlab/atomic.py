"""This file handles the atomic file writes for the whole project."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path


# This function writes the bytes atomically work used in this file.
def atomic_write_bytes(path: Path | str, data: bytes) -> Path:
    """Write to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


# This function writes the text atomically work used in this file.
def atomic_write_text(path: Path | str, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))
