"""Counter-based random streams.

Every random number is a pure function of ``(seed, worker, purpose, counter)``:
rows are produced in fixed-size chunks by a Philox generator whose key encodes
``(seed, worker, purpose)`` and whose counter encodes the chunk index. Values
therefore never depend on the order in which a simulation consumes them.
"""

from __future__ import annotations

import numpy as np

CHUNK = 256

PURPOSES = {
    "oracle": 1,
    "compute": 2,
    "level": 3,
    "problem": 4,
}

_MASK64 = (1 << 64) - 1


def _generator(seed: int, worker: int, purpose: int, chunk: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, ((worker & 0xFFFFFFFF) << 16) | (purpose & 0xFFFF)],
                   dtype=np.uint64)
    counter = np.array([0, 0, chunk & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def generator_for(seed: int, worker: int, purpose: str, index: int = 0) -> np.random.Generator:
    """A one-off generator for a single keyed stream."""
    return _generator(seed, worker, PURPOSES[purpose], index)


class Stream:
    """Addressable rows of ``width`` numbers drawn from ``kind``."""

    __slots__ = ("seed", "worker", "purpose", "width", "kind", "_chunks", "_cursor")

    def __init__(self, seed: int, worker: int, purpose: str, width: int = 1,
                 kind: str = "uniform"):
        if kind not in ("uniform", "normal"):
            raise ValueError(kind)
        self.seed = int(seed)
        self.worker = int(worker)
        self.purpose = PURPOSES[purpose]
        self.width = int(width)
        self.kind = kind
        self._chunks: dict[int, np.ndarray] = {}
        self._cursor = 0

    def _chunk(self, c: int) -> np.ndarray:
        arr = self._chunks.get(c)
        if arr is None:
            g = _generator(self.seed, self.worker, self.purpose, c)
            shape = (CHUNK, self.width)
            arr = g.random(shape) if self.kind == "uniform" else g.standard_normal(shape)
            if len(self._chunks) > 64:
                self._chunks.clear()
            self._chunks[c] = arr
        return arr

    def rows(self, start: int, count: int) -> np.ndarray:
        """Rows ``start .. start+count-1`` as a ``(count, width)`` array."""
        if count <= 0:
            return np.empty((0, self.width))
        c0, c1 = start // CHUNK, (start + count - 1) // CHUNK
        if c0 == c1:
            off = start - c0 * CHUNK
            return self._chunk(c0)[off:off + count]
        parts = []
        pos, end = start, start + count
        while pos < end:
            c = pos // CHUNK
            off = pos - c * CHUNK
            take = min(CHUNK - off, end - pos)
            parts.append(self._chunk(c)[off:off + take])
            pos += take
        return np.concatenate(parts)

    def row(self, index: int) -> np.ndarray:
        return self._chunk(index // CHUNK)[index % CHUNK]

    def next_value(self) -> float:
        """Sequential scalar access (first column)."""
        v = float(self.row(self._cursor)[0])
        self._cursor += 1
        return v


class StreamFamily:
    """Lazily created streams for one master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[tuple, Stream] = {}

    def get(self, worker: int, purpose: str, width: int = 1, kind: str = "uniform") -> Stream:
        key = (worker, purpose, width, kind)
        s = self._streams.get(key)
        if s is None:
            s = self._streams[key] = Stream(self.seed, worker, purpose, width, kind)
        return s
