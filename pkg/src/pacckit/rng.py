"""Deterministic random-stream management.

Every random draw in the package flows from a single 64-bit seed. Named
substreams (generation, init, dropout, shuffling, sampling) are derived by
hashing the name into the seed, so components can be re-seeded independently
without coupling their draw orders: adding a draw to one substream never
shifts another.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _mix(seed: int, name: str) -> int:
    digest = hashlib.blake2b(f"{seed & _MASK64}:{name}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


@dataclass
class RngState:
    """Reproducible generator factory.

    Identical (seed, counter) always yields the identical stream. Each call
    to :meth:`generator` consumes the current counter value, so successive
    calls hand out fresh, non-overlapping but fully reproducible streams.
    """

    seed: int
    counter: int = 0

    def generator(self) -> np.random.Generator:
        gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((self.seed & _MASK64, self.counter)))
        )
        self.counter += 1
        return gen

    def substream(self, name: str) -> "RngState":
        """Independent child state; stable across runs and platforms."""
        return RngState(_mix(self.seed, name))
