"""Deterministic random streams.

Streams are backed by the Philox-4x64 counter-based generator, keyed directly
by ``(master_seed, stream_id)``.  Two streams with equal keys replay the same
sequence; distinct stream ids are independent by construction, so per-sample
streams can be generated in any order (or in parallel) without shared state.

Normal variates are produced by the Box-Muller transform applied to the
generator's uniform output, so the draw sequence is pinned down exactly by
(key, draw order) and nothing else.
"""
from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64/box-muller"


class RngStream:
    """One reproducible random stream identified by (master_seed, stream_id)."""

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        key = np.array(
            [self.master_seed % 2**64, self.stream_id % 2**64], dtype=np.uint64
        )
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, shape=()) -> np.ndarray:
        """Uniforms on [0, 1)."""
        return self._gen.random(size=shape, dtype=np.float64)

    def normal(self, shape=()) -> np.ndarray:
        """Standard normals via Box-Muller pairs on uniform draws."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        # u1 shifted into (0, 1] so log is finite
        u1 = 1.0 - self._gen.random(size=pairs, dtype=np.float64)
        u2 = self._gen.random(size=pairs, dtype=np.float64)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        out = z[:n].reshape(shape) if shape else z[0]
        return out


def derive(master_seed: int, sample_index: int) -> RngStream:
    """Per-sample stream: key mixes the master seed with the sample index."""
    return RngStream(master_seed, sample_index)
