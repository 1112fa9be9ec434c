"""Counter-based Gaussian increments keyed by (seed, stream_id, step, mode).

A Philox4x64 generator is keyed by ``(seed, stream_id)``. The counter selects a
block of ``BLOCK`` steps, so any step's draws can be regenerated without
replaying the stream from the start, and distinct streams never overlap.
"""

import numpy as np

BLOCK = 256
_MASK64 = (1 << 64) - 1


def _generator(seed: int, stream_id: int, block: int) -> np.random.Generator:
    key = (int(seed) & _MASK64) | ((int(stream_id) & _MASK64) << 64)
    bitgen = np.random.Philox(key=key, counter=[0, 0, int(block), 0])
    return np.random.Generator(bitgen)


def standard_block(seed: int, stream_id: int, block: int, n_modes: int) -> np.ndarray:
    """Standard normals of shape (BLOCK, n_modes) for steps ``block*BLOCK ...``."""
    return _generator(seed, stream_id, block).standard_normal((BLOCK, n_modes))


class IncrementStream:
    """Brownian increments ``N(0, dt)`` per step and forced mode for one or many streams."""

    def __init__(self, seed: int, stream_ids, n_modes: int, dt: float):
        self.seed = int(seed)
        self.stream_ids = np.atleast_1d(np.asarray(stream_ids, dtype=np.uint64))
        self.n_modes = n_modes
        self.sqrt_dt = float(np.sqrt(dt))
        self._block = -1
        self._cache = None

    def __call__(self, step: int) -> np.ndarray:
        """Increments of shape (n_streams, n_modes) for the given step."""
        if self.n_modes == 0:
            return np.zeros((len(self.stream_ids), 0))
        block, off = divmod(int(step), BLOCK)
        if block != self._block:
            self._cache = np.stack([standard_block(self.seed, int(s), block, self.n_modes)
                                    for s in self.stream_ids])
            self._block = block
        return self._cache[:, off, :] * self.sqrt_dt
