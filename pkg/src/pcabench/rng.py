"""Seeded random number generation.

Every stochastic choice in the package (sketch matrices, weight init,
batch shuffling, dropout masks, synthetic data) flows through SeededRng so
that a run is fully determined by its integer seed. The underlying stream
is PCG64, which is stable across platforms and numpy releases.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError


class SeededRng:
    """Thin wrapper over numpy's Generator pinned to a PCG64 stream."""

    def __init__(self, seed: int):
        if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
            raise ContractError(f"seed must be an integer, got {seed!r}")
        if seed < 0:
            raise ContractError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws, float64."""
        return self._gen.standard_normal(size=shape, dtype=np.float64)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        if not high > low:
            raise ContractError(f"need high > low, got [{low}, {high})")
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        if n < 0:
            raise ContractError(f"permutation length must be >= 0, got {n}")
        return self._gen.permutation(n)

    def bernoulli(self, keep_prob: float, shape) -> np.ndarray:
        """Float mask of 0/1 draws; 1 with probability keep_prob."""
        if not 0.0 <= keep_prob <= 1.0:
            raise ContractError(f"keep_prob must lie in [0, 1], got {keep_prob}")
        return (self._gen.random(size=shape) < keep_prob).astype(np.float64)

    def spawn(self, offset: int) -> "SeededRng":
        """Independent child stream; same (seed, offset) -> same stream."""
        return SeededRng((self.seed ^ (offset * 0x9E3779B1)) & 0x7FFFFFFF)


def derive_cell_seed(sweep_seed: int, cell_index: int) -> int:
    """Per-cell seed for a sweep: sweep seed XOR cell position."""
    if cell_index < 0:
        raise ContractError(f"cell_index must be >= 0, got {cell_index}")
    return int(sweep_seed) ^ int(cell_index)
