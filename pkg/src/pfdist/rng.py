"""Counter-based random streams.

Every random draw in the package comes from a :class:`Stream`, a seed plus a
tuple of integer keys. A stream is turned into a fresh Philox generator on
demand, so two callers holding the same key always see the same numbers and
never share mutable generator state.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = ["Stream", "tag"]


def tag(name: str) -> int:
    """Stable 32-bit integer for a string key (e.g. an experiment name)."""
    return zlib.crc32(name.encode("utf-8"))


@dataclass(frozen=True)
class Stream:
    seed: int
    key: tuple[int, ...] = ()

    def child(self, *keys: int | str) -> "Stream":
        ints = tuple(tag(k) if isinstance(k, str) else int(k) for k in keys)
        return Stream(self.seed, self.key + ints)

    def generator(self, *keys: int | str) -> np.random.Generator:
        s = self.child(*keys) if keys else self
        ss = np.random.SeedSequence(entropy=int(s.seed), spawn_key=s.key)
        return np.random.Generator(np.random.Philox(ss))

    def derive_seed(self) -> int:
        """63-bit integer seed unique to this stream's key."""
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.key)
        return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
