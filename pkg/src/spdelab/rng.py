"""Counter-based random streams for reproducible parallel Monte Carlo.

Every path owns a Philox stream keyed by ``(master_seed, substream_id)``.
Step ``k`` of a path consumes the ``n`` standard normals that follow the
first ``k * n`` of its stream, so the draws depend only on
``(master_seed, substream_id, step_index)`` and never on how paths are
grouped into blocks or threads. Brownian-bridge refinements of step ``k``
use a separate stream with the counter offset to ``(0, k, 1, 0)``; the main
stream only ever advances the lowest counter word, so the two cannot overlap.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def _key(master_seed, substream_id):
    if not 0 <= int(master_seed) <= MASK64:
        raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {master_seed}")
    if not 0 <= int(substream_id) <= MASK64:
        raise ValueError(f"substream id must be a 64-bit unsigned integer, got {substream_id}")
    return np.array([int(master_seed), int(substream_id)], dtype=np.uint64)


def substream(master_seed, substream_id) -> np.random.Generator:
    """Main normal stream of one path."""
    return np.random.Generator(np.random.Philox(key=_key(master_seed, substream_id)))


def bridge_stream(master_seed, substream_id, step_index) -> np.random.Generator:
    """Auxiliary stream for refining step ``step_index`` of one path."""
    counter = np.array([0, int(step_index), 1, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_key(master_seed, substream_id), counter=counter))


class BlockNoise:
    """Standard-normal draws for a block of paths, produced in time chunks.

    ``next()`` returns an array of shape (n_paths, n) for the next step.
    """

    def __init__(self, master_seed, substream_ids, n, chunk=128):
        self.gens = [substream(master_seed, s) for s in substream_ids]
        self.n = n
        self.chunk = chunk
        self._buf = None
        self._pos = 0

    def next(self):
        if self._buf is None or self._pos == self._buf.shape[1]:
            self._buf = np.stack([g.standard_normal((self.chunk, self.n)) for g in self.gens])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out


def brownian_bridge(increment, h, levels, gen):
    """Split one increment over ``h`` into ``2**levels`` dyadic sub-increments.

    ``increment`` has shape (n,); returns shape (2**levels, n) summing to it.
    Uses Levy's midpoint construction, one standard normal per midpoint.
    """
    pieces = np.asarray(increment, dtype=float)[None, :]
    length = h
    for _ in range(levels):
        z = gen.standard_normal(pieces.shape)
        left = 0.5 * pieces + 0.5 * np.sqrt(length) * z
        right = pieces - left
        pieces = np.stack([left, right], axis=1).reshape(-1, pieces.shape[1])
        length *= 0.5
    return pieces
