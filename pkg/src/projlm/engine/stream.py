"""Counter-based innovation streams.

Every value is a pure function of (master_seed, replicate, time index):
replicate r keys its own Philox generator and time index t owns one
counter block, so any contiguous range can be fetched at random access
and worker scheduling can never change a value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

__all__ = ["InnovationStream", "DISTRIBUTIONS"]

DISTRIBUTIONS = ("standard-normal", "rademacher", "standardized-uniform")

# time indices may be negative (presample, burn-in); shift them into the
# nonnegative counter range
_BLOCK_OFFSET = 1 << 62

_SQRT12 = np.sqrt(12.0)


@dataclass(frozen=True)
class InnovationStream:
    """Mean-0 variance-1 i.i.d. innovations, reproducible at random access."""

    distribution: str = "standard-normal"
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}; "
                             f"choose one of {DISTRIBUTIONS}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 bits")

    def raw(self, replicate: int, start: int, stop: int) -> np.ndarray:
        """One uint64 word per time index in [start, stop)."""
        if stop < start:
            raise ValueError("empty or negative range")
        if start < -(1 << 61):
            raise ValueError("time index too far in the past")
        count = stop - start
        if count == 0:
            return np.empty(0, dtype=np.uint64)
        gen = Philox(key=int(self.master_seed) + (int(replicate) << 64))
        gen.advance(_BLOCK_OFFSET + start)
        # one 4-word block per index; the first word of each block is used
        return gen.random_raw(4 * count)[::4]

    def values(self, replicate: int, start: int, stop: int) -> np.ndarray:
        """Innovations for time indices [start, stop)."""
        raw = self.raw(replicate, start, stop)
        if self.distribution == "rademacher":
            return 1.0 - 2.0 * (raw >> np.uint64(63)).astype(np.float64)
        # uniform on (0,1), exactly representable, never 0 or 1
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        if self.distribution == "standard-normal":
            return ndtri(u)
        return (u - 0.5) * _SQRT12

    def to_dict(self) -> dict:
        return {"distribution": self.distribution, "master_seed": int(self.master_seed)}

    @staticmethod
    def from_dict(d: dict) -> "InnovationStream":
        d = dict(d)
        out = InnovationStream(d.pop("distribution", "standard-normal"),
                               int(d.pop("master_seed", 0)))
        if d:
            raise ValueError(f"unknown stream fields: {sorted(d)}")
        return out
