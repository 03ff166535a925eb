"""Counter-based random number streams.

Every stochastic operation in the package takes an explicit stream, derived
from a 64-bit master seed plus integer indices (replica number, purpose tag).
Numpy-level sampling uses Philox (counter based); the event-driven kernels use
a splitmix64 state derived from the same subkey, so replica farms are
bit-reproducible regardless of scheduling.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def subkey(master_seed: int, *indices: int) -> int:
    """Derive a 64-bit subkey from the master seed and an index path."""
    state = master_seed & _MASK64
    state, out = _splitmix64(state)
    for ix in indices:
        state = (state ^ ((ix & _MASK64) * 0x9E3779B97F4A7C15)) & _MASK64
        state, out = _splitmix64(state)
    return out


class RngStream:
    """One independent stream: numpy Generator plus kernel subkeys."""

    def __init__(self, master_seed: int, *indices: int):
        self.master_seed = int(master_seed) & _MASK64
        self.indices = tuple(int(i) for i in indices)
        self.key = subkey(self.master_seed, *self.indices)
        self.generator = np.random.Generator(np.random.Philox(key=self.key))

    def child(self, *indices: int) -> "RngStream":
        return RngStream(self.master_seed, *(self.indices + indices))

    def kernel_seed(self, tag: int = 0) -> int:
        """64-bit state for the in-kernel splitmix64 generator."""
        return subkey(self.key, tag)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.master_seed}, indices={self.indices})"
