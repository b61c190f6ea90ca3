"""Deterministic, portable randomness for augmentation pipelines.

The whole contract is reproducible from FORMAT.md alone:

* seeds are derived with the SplitMix64 finalizer folded over the parts
  (master seed, sample index, epoch, augmentation id), and
* a Stream with 64-bit seed K emits the raw word sequence of
  Philox-4x64-10 keyed with (K, 0), counter blocks 1, 2, 3, ...
  (word i of the stream is word i mod 4 of block 1 + i // 4).

Identical (master_seed, sample_index, epoch) therefore yield identical
draws on any platform and under any execution order, which is what makes
multi-worker augmentation runs bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Philox

__all__ = ["SeedScheme", "Stream", "derive_rng", "mix64"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_DOUBLE_SCALE = 2.0 ** -53


def _finalize(z: int) -> int:
    """SplitMix64 output scrambler (Steele, Lea, Flood 2014 constants)."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Fold integer parts into one 64-bit seed; documented in FORMAT.md.

    acc starts at 0; for each part p: acc = finalize((acc + GOLDEN) xor p).
    Parts are reduced mod 2**64 first, so negative indices are rejected
    rather than silently wrapped.
    """
    acc = 0
    for p in parts:
        if p < 0:
            raise ValueError(f"seed parts must be non-negative, got {p}")
        acc = _finalize(((acc + _GOLDEN) & _MASK64) ^ (p & _MASK64))
    return acc


class Stream:
    """Deterministic 64-bit random stream with documented draw mappings.

    uniform(lo, hi) maps one raw word u to lo + (u >> 11) * 2**-53 * (hi - lo),
    so it covers [lo, hi). randint(lo, hi) is inclusive on both ends and
    uses u mod (hi - lo + 1); the modulo bias is < 2**-32 for every range
    this toolkit draws, which buys exact cross-language portability.
    """

    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError(f"stream seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self._bits = Philox(key=np.array([seed, 0], dtype=np.uint64))

    def next_u64(self) -> int:
        return int(self._bits.random_raw())

    def uniform(self, lo: float, hi: float) -> float:
        if not lo <= hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        frac = (self.next_u64() >> 11) * _DOUBLE_SCALE
        return lo + frac * (hi - lo)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if lo > hi:
            raise ValueError(f"empty integer range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def coin(self, probability: float) -> bool:
        """True with the given probability; p=0 never fires, p=1 always."""
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"probability must be in [0, 1], got {probability}")
        return self.uniform(0.0, 1.0) < probability

    def child(self, tag: int) -> "Stream":
        """Independent substream; consumes no draws from this stream."""
        return Stream(mix64(self.seed, tag))


@dataclass(frozen=True)
class SeedScheme:
    """Master seed plus the fixed derivation of per-sample streams."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master seed must fit in 64 bits")

    def sample_seed(self, sample_index: int, epoch: int) -> int:
        return mix64(self.master_seed, sample_index, epoch)

    def stream(self, sample_index: int, epoch: int) -> Stream:
        return Stream(self.sample_seed(sample_index, epoch))


def derive_rng(scheme: SeedScheme, sample_index: int, epoch: int) -> Stream:
    """Deterministic stream for one (sample, epoch); pure in its inputs."""
    return scheme.stream(sample_index, epoch)
