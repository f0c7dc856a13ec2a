"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(master_seed, stream_id)``, so
its output is a pure function of those two integers and independent of the
order in which streams are consumed.  Generators are handed straight to the
numba kernels, which draw from them in place.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id_for(*parts: object) -> int:
    """Stable 64-bit stream id from arbitrary labels (experiment, rung, replicate...)."""
    text = "\x1f".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def entropy_seed() -> int:
    return secrets.randbits(63)


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= self.master_seed <= _MASK64 and 0 <= self.stream_id <= _MASK64):
            raise ValueError("seed and stream id must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at draw index 0 of this stream."""
        key = self.master_seed | (self.stream_id << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *labels: object) -> "RngStream":
        """Derived stream; same labels always give the same child."""
        return RngStream(self.master_seed, stream_id_for(self.stream_id, *labels))


def as_generator(rng: RngStream | np.random.Generator | int | None) -> np.random.Generator:
    """Accept the various ways callers hand us randomness."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        return RngStream(entropy_seed()).generator()
    return RngStream(int(rng)).generator()
