"""Counter-based random streams with index-addressable substreams.

Every stream is keyed by ``(seed, key)`` where ``key`` is a tuple of
non-negative integers; ``RandomStream(seed).substream(i)`` is the stream of
trajectory ``i``.  Directions and waiting times come from two independent
Philox generators, so the j-th jump of a path always uses the j-th direction
and the j-th waiting time no matter how the draws are blocked.
"""

from __future__ import annotations

import numpy as np

_DIRECTIONS, _WAITS, _AUX = 0, 1, 2


def _philox(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


class RandomStream:
    """Seeded stream of unit directions, unit exponentials and auxiliary draws."""

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        self._dir = _philox(seed, self.key + (_DIRECTIONS,))
        self._wait = _philox(seed, self.key + (_WAITS,))
        self._aux = None

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"

    def substream(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.key + (int(index),))

    @property
    def aux(self) -> np.random.Generator:
        """Generator for draws that are neither jump directions nor waiting times."""
        if self._aux is None:
            self._aux = _philox(self.seed, self.key + (_AUX,))
        return self._aux

    def directions(self, n: int) -> np.ndarray:
        """``n`` independent uniform points on the unit sphere, shape (n, 3)."""
        g = self._dir.standard_normal((n, 3))
        norm = np.sqrt(np.einsum("ij,ij->i", g, g))
        bad = np.flatnonzero(norm == 0.0)
        for i in bad:
            # probability-zero event; redraw from the same generator
            while norm[i] == 0.0:
                g[i] = self._dir.standard_normal(3)
                norm[i] = np.sqrt(g[i] @ g[i])
        return g / norm[:, None]

    def exponentials(self, n: int) -> np.ndarray:
        """``n`` unit-mean exponentials by inversion, ``-log(1 - u)`` with u in [0, 1)."""
        return -np.log1p(-self._wait.random(n))
