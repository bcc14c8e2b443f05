"""This file handles the random streams for the diffcore part of the project.

Streams are keyed by ``(seed, label)`` and backed by NumPy's counter-based
Philox generator, so a new consumer with its own label never shifts the
draws another consumer sees.
"""

from __future__ import annotations

import hashlib
from collections.abc import Sequence

import numpy as np


# This function derives the key work used in this file.
def _derive_key(seed: int, label: str) -> int:
    digest = hashlib.blake2b(
        f"{int(seed)}:{label}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


# This class keeps the rng stream data and behavior in one place.
class RngStream:
    """Labelled, reproducible stream of random draws."""

    def __init__(self, seed: int, label: str) -> None:
        self.seed = int(seed)
        self.label = label
        self._generator = np.random.Generator(
            np.random.Philox(key=_derive_key(self.seed, label))
        )

    @property
    def counter(self) -> tuple[int, ...]:
        state = self._generator.bit_generator.state["state"]
        return tuple(int(c) for c in state["counter"])

    def child(self, label: str) -> RngStream:
        """Independent stream namespaced under this one."""
        return RngStream(self.seed, f"{self.label}/{label}")

    def normal(
        self,
        shape: Sequence[int] | int,
        scale: float = 1.0,
    ) -> np.ndarray:
        return self._generator.normal(0.0, scale, size=shape)

    def uniform(
        self,
        low: float,
        high: float,
        shape: Sequence[int] | int,
    ) -> np.ndarray:
        return self._generator.uniform(low, high, size=shape)

    def integers(
        self,
        low: int,
        high: int,
        shape: Sequence[int] | int,
    ) -> np.ndarray:
        return self._generator.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def __repr__(self) -> str:
        return f"<RngStream seed={self.seed} label={self.label!r}>"
