"""Counter-based random streams keyed by (seed, path index).

Each path owns a Philox generator whose key packs the run seed and the
path index; the Philox counter advances with the step index.  Draws for a
path therefore never depend on how paths are grouped into chunks or
distributed over workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def path_generator(seed: int, path: int) -> np.random.Generator:
    """Generator for path ``path`` of a run seeded with ``seed``."""
    if path < 0:
        raise ValueError("path index must be non-negative")
    key = ((int(seed) & _MASK64) << 64) | (int(path) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


class ChunkStreams:
    """Normal increments for a contiguous block of paths.

    ``draw(n_steps)`` returns an array of shape ``(n_steps, n_paths, width)``
    holding the next ``n_steps`` standard normal vectors of every path.
    """

    def __init__(self, seed: int, paths, width: int):
        self.width = width
        self._gens = [path_generator(seed, int(p)) for p in paths]

    def draw(self, n_steps: int) -> np.ndarray:
        out = np.empty((n_steps, len(self._gens), self.width))
        for i, g in enumerate(self._gens):
            out[:, i, :] = g.standard_normal((n_steps, self.width))
        return out
